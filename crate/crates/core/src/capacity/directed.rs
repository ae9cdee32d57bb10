use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stage::clip;
use super::{joint_kernel_step, stage_rewards, JointState, StageRewards};
use crate::dp::PolicyTree;
use crate::error::{Error, Result};
use crate::info::LogBase;
use crate::model::{BeliefKey, Channel, ProblemSpec};

/// Default cap on joint states per layer.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Weights `(λ₁, λ₂, λ₃)` of a supporting hyperplane of the rate region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LambdaWeights {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let w = LambdaWeights { l1, l2, l3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.l1, self.l2, self.l3];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || all.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("lambda weights must be non-negative and not all zero"));
        }
        Ok(())
    }

    pub fn apply(&self, i1: f64, i2: f64, i3: f64) -> f64 {
        self.l1 * i1 + self.l2 * i2 + self.l3 * i3
    }
}

/// Label attached to values obtained from the structured deterministic class.
pub const STRUCTURED_LOWER_BOUND: &str = "structured_deterministic_lower_bound";

/// Per-step and averaged directed informations of a policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectedInfoBreakdown {
    pub log_base: LogBase,
    /// `I(X¹_t; Z_t | X²_{1:t}, Z_{1:t-1})`.
    pub i1_per_t: Vec<f64>,
    /// `I(X²_t; Z_t | X¹_{1:t}, Z_{1:t-1})`.
    pub i2_per_t: Vec<f64>,
    /// `I(X¹_t, X²_t; Z_t | Z_{1:t-1})`.
    pub i3_per_t: Vec<f64>,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub lambda: LambdaWeights,
    pub in_lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_type: Option<&'static str>,
}

impl DirectedInfoBreakdown {
    pub(crate) fn from_per_t(i1_per_t: Vec<f64>, i2_per_t: Vec<f64>, i3_per_t: Vec<f64>, lambda: LambdaWeights, log_base: LogBase) -> Self {
        let n = i1_per_t.len().max(1) as f64;
        let (i1, i2, i3) = (i1_per_t.iter().sum::<f64>() / n, i2_per_t.iter().sum::<f64>() / n, i3_per_t.iter().sum::<f64>() / n);
        DirectedInfoBreakdown {
            log_base,
            i1_per_t,
            i2_per_t,
            i3_per_t,
            i1,
            i2,
            i3,
            lambda,
            in_lambda: lambda.apply(i1, i2, i3),
            bound_type: None,
        }
    }

    /// Largest componentwise difference to another breakdown.
    pub fn max_difference(&self, other: &DirectedInfoBreakdown) -> f64 {
        let per_t = [(&self.i1_per_t, &other.i1_per_t), (&self.i2_per_t, &other.i2_per_t), (&self.i3_per_t, &other.i3_per_t)];
        let mut d = (self.in_lambda - other.in_lambda).abs();
        for (a, b) in per_t {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(d, f64::max);
        }
        d
    }
}

/// Exact `Iₙ(λ)` of a structured policy: expectation of the stage rewards
/// over the joint-state chain started from all-uniform beliefs.
pub fn evaluate_in(
    spec: &ProblemSpec,
    policy: &PolicyTree,
    ch: &Channel,
    lambda: LambdaWeights,
    state_cap: usize,
) -> Result<DirectedInfoBreakdown> {
    lambda.validate()?;
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    let base = spec.log_base;
    let n = policy.horizon();
    let mut per_t = vec![StageRewards { i1: 0.0, i2: 0.0, i3: 0.0 }; n];
    let mut layer = vec![(1.0, JointState::initial(spec))];
    for (t, acc) in per_t.iter_mut().enumerate() {
        let stepped: Vec<(StageRewards, Vec<(f64, JointState)>)> = layer
            .par_iter()
            .map(|(mass, state)| -> Result<_> {
                let e = policy.action_at(t, &state.pi)?;
                let r = stage_rewards(state, e, ch, base)?;
                let next = joint_kernel_step(state, e, ch)?;
                Ok((StageRewards { i1: mass * r.i1, i2: mass * r.i2, i3: mass * r.i3 }, next.into_iter().map(|(p, s)| (mass * p, s)).collect()))
            })
            .collect::<Result<_>>()?;
        let mut next_layer: Vec<(f64, JointState)> = Vec::new();
        let mut seen: HashMap<(BeliefKey, BeliefKey, BeliefKey), usize> = HashMap::new();
        for (r, branches) in stepped {
            acc.i1 += r.i1;
            acc.i2 += r.i2;
            acc.i3 += r.i3;
            for (p, s) in branches {
                match seen.get(&s.key()) {
                    Some(&i) => next_layer[i].0 += p,
                    None => {
                        seen.insert(s.key(), next_layer.len());
                        next_layer.push((p, s));
                    }
                }
            }
        }
        if next_layer.len() > state_cap {
            return Err(Error::BudgetExceeded { what: "joint states per layer", count: next_layer.len() as f64, cap: state_cap as f64 });
        }
        layer = next_layer;
    }
    for r in &per_t {
        clip("i1", r.i1)?;
        clip("i2", r.i2)?;
        clip("i3", r.i3)?;
    }
    Ok(DirectedInfoBreakdown::from_per_t(
        per_t.iter().map(|r| r.i1).collect(),
        per_t.iter().map(|r| r.i2).collect(),
        per_t.iter().map(|r| r.i3).collect(),
        lambda,
        base,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::dp::{PolicyContext, PolicyRegistry};
    use crate::info::binary_entropy;
    use crate::objective::ErrorProbability;

    fn policy(spec: &ProblemSpec, ch: &Channel, n: usize, name: &str) -> PolicyTree {
        let ctx = PolicyContext { spec, channel: ch, horizon: n, cost: &ErrorProbability, node_cap: 100_000, action_set: None };
        PolicyRegistry::with_builtins().build(name, &ctx).unwrap()
    }

    #[test]
    fn lambda_validation() {
        assert!(LambdaWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LambdaWeights::new(-1.0, 1.0, 0.0).is_err());
        assert!(LambdaWeights::new(0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn uniform_channel_is_zero() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let pol = policy(&spec, &ch, 3, "hashed(2)");
        let r = evaluate_in(&spec, &pol, &ch, LambdaWeights::new(1.0, 1.0, 1.0).unwrap(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(r.in_lambda, 0.0);
    }

    #[test]
    fn identity_channel_one_shot() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let pol = policy(&spec, &ch, 1, "identity");
        let r = evaluate_in(&spec, &pol, &ch, LambdaWeights::new(0.0, 0.0, 1.0).unwrap(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(r.in_lambda, 2.0);
        assert_eq!((r.i1, r.i2), (1.0, 1.0));
    }

    #[test]
    fn xor_bsc_one_shot() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let pol = policy(&spec, &ch, 1, "identity");
        let r = evaluate_in(&spec, &pol, &ch, LambdaWeights::new(0.0, 0.0, 1.0).unwrap(), DEFAULT_STATE_CAP).unwrap();
        assert!((r.in_lambda - (1.0 - binary_entropy(0.1, LogBase::Bits))).abs() < 1e-12);
        assert!((r.in_lambda - 0.53100).abs() < 1e-4);
    }
}
