//! Time-invariant stage functions whose expectations give the per-step
//! directed informations.

use serde::Serialize;

use super::JointState;
use crate::error::{Error, Result};
use crate::info::{entropy, LogBase, PROB_FLOOR};
use crate::model::{Channel, JointAction, JointBelief, PrivateBelief, User};

/// Rewards within this distance below zero are clipped to zero; anything
/// lower is reported as an inconsistent state.
pub const NEGATIVE_INFORMATION_TOLERANCE: f64 = 1e-6;

/// `P(x¹, x² | π, e)` as a row-major `|X¹| × |X²|` table.
fn input_pair_law(pi: &JointBelief, e: &JointAction, ch: &Channel) -> Vec<f64> {
    let mut law = vec![0.0; ch.x1_size() * ch.x2_size()];
    for w1 in 0..pi.m1() {
        for w2 in 0..pi.m2() {
            law[e.e1.apply(w1) * ch.x2_size() + e.e2.apply(w2)] += pi.get(w1, w2);
        }
    }
    law
}

/// `H(Z_t | X¹_t, X²_t)`: `Σ P(x¹,x²|π,e) H(Q(·|x¹,x²))`.
pub fn h0(pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    let law = input_pair_law(pi, e, ch);
    let mut h = 0.0;
    for x1 in 0..ch.x1_size() {
        for x2 in 0..ch.x2_size() {
            let p = law[x1 * ch.x2_size() + x2];
            if p > PROB_FLOOR {
                h += p * entropy(ch.row(x1, x2), base);
            }
        }
    }
    h
}

/// `H(Z_t | Z_{1:t-1})`: entropy of `P(z | π, e)`.
pub fn h3(pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    let law = input_pair_law(pi, e, ch);
    let mut pz = vec![0.0; ch.z_size()];
    for x1 in 0..ch.x1_size() {
        for x2 in 0..ch.x2_size() {
            let p = law[x1 * ch.x2_size() + x2];
            for (z, q) in ch.row(x1, x2).iter().enumerate() {
                pz[z] += p * q;
            }
        }
    }
    entropy(&pz, base)
}

/// `H(Z_t | X^{known}_{1:t}, Z_{1:t-1})` where `known` is the user whose
/// inputs are conditioned on. Its private belief weights its message, and
/// the other user's message follows the common belief's conditional.
fn conditional_output_entropy(known: User, pihat: &PrivateBelief, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    let (mk, mu) = match known {
        User::Two => (pi.m2(), pi.m1()),
        User::One => (pi.m1(), pi.m2()),
    };
    let xk_size = match known {
        User::Two => ch.x2_size(),
        User::One => ch.x1_size(),
    };
    let marginal = pi.marginal(known);
    let joint = |wk: usize, wu: usize| match known {
        User::Two => pi.get(wu, wk),
        User::One => pi.get(wk, wu),
    };
    let ek = e.encoder(known);
    let eu = e.encoder(known.other());

    let mut h = 0.0;
    for xk in 0..xk_size {
        // P(xᵏ | π̂ᵏ, eᵏ)
        let px: f64 = (0..mk).filter(|&w| ek.apply(w) == xk).map(|w| pihat.probs()[w]).sum();
        if px <= PROB_FLOOR {
            continue;
        }
        let mut pz = vec![0.0; ch.z_size()];
        let mut norm = 0.0;
        for wk in (0..mk).filter(|&w| ek.apply(w) == xk) {
            let weight_k = pihat.probs()[wk];
            if weight_k <= 0.0 || marginal[wk] <= 0.0 {
                continue;
            }
            for wu in 0..mu {
                let weight = joint(wk, wu) / marginal[wk] * weight_k;
                if weight <= 0.0 {
                    continue;
                }
                norm += weight;
                let xu = eu.apply(wu);
                let row = match known {
                    User::Two => ch.row(xu, xk),
                    User::One => ch.row(xk, xu),
                };
                for (z, q) in row.iter().enumerate() {
                    pz[z] += weight * q;
                }
            }
        }
        if norm <= 0.0 {
            continue;
        }
        pz.iter_mut().for_each(|v| *v /= norm);
        h += px * entropy(&pz, base);
    }
    h
}

/// Stage function for `H(Z_t | X²_{1:t}, Z_{1:t-1})`.
pub fn h1(pihat2: &PrivateBelief, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    conditional_output_entropy(User::Two, pihat2, pi, e, ch, base)
}

/// Stage function for `H(Z_t | X¹_{1:t}, Z_{1:t-1})`.
pub fn h2(pihat1: &PrivateBelief, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    conditional_output_entropy(User::One, pihat1, pi, e, ch, base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageRewards {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

pub(crate) fn clip(which: &'static str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -NEGATIVE_INFORMATION_TOLERANCE {
        if v < -1e-9 {
            log::warn!("clipping {which} = {v:e} to zero");
        }
        Ok(0.0)
    } else {
        Err(Error::NegativeInformation { which, value: v })
    }
}

/// `(h₁ - h₀, h₂ - h₀, h₃ - h₀)`.
///
/// `i₃` is a mutual information under the common belief and is checked for
/// sign here. `h₀` weights the inputs by the common belief while `h₁`, `h₂`
/// condition on one user's input history, so `i₁` and `i₂` are only
/// nonnegative in expectation over states; they are returned as computed.
pub fn stage_rewards(state: &JointState, e: &JointAction, ch: &Channel, base: LogBase) -> Result<StageRewards> {
    let base0 = h0(&state.pi, e, ch, base);
    Ok(StageRewards {
        i1: h1(&state.pihat2, &state.pi, e, ch, base) - base0,
        i2: h2(&state.pihat1, &state.pi, e, ch, base) - base0,
        i3: clip("i3", h3(&state.pi, e, ch, base) - base0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::info::binary_entropy;
    use crate::model::{validate_channel, ProblemSpec};

    const BITS: LogBase = LogBase::Bits;

    fn identity(spec: &ProblemSpec) -> JointAction {
        JointAction::from_values(spec, vec![0, 1], vec![0, 1]).unwrap()
    }

    #[test]
    fn xor_bsc_row_entropy_everywhere() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let pi = JointBelief::from_probs(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for e in crate::model::all_joint_actions(&spec) {
            assert!((h0(&pi, &e, &ch, BITS) - binary_entropy(0.1, BITS)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_channel_h0() {
        let spec = ProblemSpec::binary();
        let rows = vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.9, 0.1], vec![0.5, 0.5]];
        let ch = validate_channel(&spec, &rows).unwrap();
        let v = h0(&JointBelief::uniform(2, 2), &identity(&spec), &ch, BITS);
        assert!((v - (0.5 + 0.5 * binary_entropy(0.1, BITS))).abs() < 1e-15);
    }

    #[test]
    fn identity_channel_first_step() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let state = JointState::initial(&spec);
        let e = identity(&spec);
        assert!((h3(&state.pi, &e, &ch, BITS) - 2.0).abs() < 1e-15);
        assert!((h1(&state.pihat2, &state.pi, &e, &ch, BITS) - 1.0).abs() < 1e-15);
        let r = stage_rewards(&state, &e, &ch, BITS).unwrap();
        assert_eq!((r.i1, r.i2, r.i3), (1.0, 1.0, 2.0));
    }

    #[test]
    fn xor_bsc_first_step() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let state = JointState::initial(&spec);
        let e = identity(&spec);
        assert!((h3(&state.pi, &e, &ch, BITS) - 1.0).abs() < 1e-15);
        assert!((h1(&state.pihat2, &state.pi, &e, &ch, BITS) - 1.0).abs() < 1e-15);
        let cap = 1.0 - binary_entropy(0.1, BITS);
        let r = stage_rewards(&state, &e, &ch, BITS).unwrap();
        for v in [r.i1, r.i2, r.i3] {
            assert!((v - cap).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_channel_rewards_vanish() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let state = JointState::initial(&spec);
        assert!((h1(&state.pihat2, &state.pi, &identity(&spec), &ch, BITS) - 1.0).abs() < 1e-15);
        let r = stage_rewards(&state, &identity(&spec), &ch, BITS).unwrap();
        assert_eq!((r.i1, r.i2, r.i3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_state_i1_may_be_negative() {
        // user 2's private belief singles out a message the common belief rules out
        let spec = ProblemSpec::binary();
        let rows = vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.9, 0.1], vec![0.5, 0.5]];
        let ch = validate_channel(&spec, &rows).unwrap();
        let state = JointState {
            pihat1: PrivateBelief::uniform(User::One, 2),
            pihat2: PrivateBelief::from_probs(User::Two, vec![0.0, 1.0]).unwrap(),
            pi: JointBelief::point_mass(2, 2, 0, 0),
        };
        let r = stage_rewards(&state, &identity(&spec), &ch, BITS).unwrap();
        assert!((r.i1 + 1.0).abs() < 1e-15);
        assert_eq!(r.i3, 0.0);
    }

    #[test]
    fn clip_tolerance() {
        assert_eq!(clip("i3", -1e-12).unwrap(), 0.0);
        assert!(matches!(clip("i3", -1e-3), Err(Error::NegativeInformation { .. })));
    }
}
