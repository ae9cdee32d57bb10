//! Entropy and divergence primitives.
//!
//! Conventions: `0 · log 0 = 0`, probabilities below [`PROB_FLOOR`] contribute
//! nothing, and the logarithm base is chosen per call through [`LogBase`].

use serde::{Deserialize, Serialize};

/// Probabilities at or below this value are treated as zero inside logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Magnitude at which a divergence with mismatched support saturates.
pub const KL_SATURATION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    #[inline]
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x.log2(),
            LogBase::Nats => x.ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogBase::Bits => "bits",
            LogBase::Nats => "nats",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" => Ok(LogBase::Bits),
            "nats" => Ok(LogBase::Nats),
            other => Err(format!("unknown log base `{other}` (expected bits or nats)")),
        }
    }
}

/// `-p log p`, zero for `p <= PROB_FLOOR`.
#[inline]
pub fn plogp_neg(p: f64, base: LogBase) -> f64 {
    if p <= PROB_FLOOR {
        0.0
    } else {
        -p * base.log(p)
    }
}

/// Shannon entropy of a (not necessarily normalized) mass vector.
pub fn entropy(p: &[f64], base: LogBase) -> f64 {
    p.iter().map(|&x| plogp_neg(x, base)).sum()
}

/// Binary entropy function.
pub fn binary_entropy(p: f64, base: LogBase) -> f64 {
    plogp_neg(p, base) + plogp_neg(1.0 - p, base)
}

/// Result of a divergence evaluation that may have hit a support mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub value: f64,
    pub saturated: bool,
}

/// `D(p || q)`. Mass of `p` where `q` vanishes makes the divergence infinite;
/// that case is reported as [`KL_SATURATION`] with `saturated = true`.
pub fn kl_divergence(p: &[f64], q: &[f64], base: LogBase) -> Divergence {
    debug_assert_eq!(p.len(), q.len());
    let mut value = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= PROB_FLOOR {
            continue;
        }
        if qi <= PROB_FLOOR {
            return Divergence { value: KL_SATURATION, saturated: true };
        }
        value += pi * base.log(pi / qi);
    }
    if value > KL_SATURATION {
        Divergence { value: KL_SATURATION, saturated: true }
    } else {
        Divergence { value, saturated: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_conventions() {
        assert_eq!(entropy(&[1.0, 0.0], LogBase::Bits), 0.0);
        assert!((entropy(&[0.5, 0.5], LogBase::Bits) - 1.0).abs() < 1e-15);
        assert!((entropy(&[0.5, 0.5], LogBase::Nats) - 2f64.ln()).abs() < 1e-15);
        assert!((binary_entropy(0.1, LogBase::Bits) - 0.468_995_593_589_281_2).abs() < 1e-15);
    }

    #[test]
    fn kl_saturates_on_support_mismatch() {
        let d = kl_divergence(&[0.5, 0.5], &[1.0, 0.0], LogBase::Bits);
        assert!(d.saturated);
        assert_eq!(d.value, KL_SATURATION);
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], LogBase::Bits);
        assert!(!d.saturated);
        assert!((d.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_base_parse() {
        assert_eq!("nats".parse::<LogBase>().unwrap(), LogBase::Nats);
        assert!("dits".parse::<LogBase>().is_err());
    }
}
