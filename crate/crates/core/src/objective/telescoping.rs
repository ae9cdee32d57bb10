use serde::Serialize;

use crate::dp::{node_masses, PolicyTree};
use crate::error::{Error, Result};
use crate::info::LogBase;
use crate::model::Channel;

use super::CostFunctional;

/// Largest horizon the telescoping check accepts.
pub const TELESCOPING_MAX_HORIZON: usize = 5;

/// `lhs = E[terminal quantity at the leaves]`,
/// `rhs = terminal quantity at the root + Σ_t E[c(Π_{t-1}, e_t)]`.
#[derive(Debug, Clone, Serialize)]
pub struct TelescopingReport {
    pub cost: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Some visited stage cost saturated, so the identity cannot hold and
    /// the residual is not meaningful.
    pub saturated: bool,
}

/// Verifies that the stage costs of `cost` sum, in expectation along the
/// policy, to the change in its terminal quantity.
pub fn check_telescoping(policy: &PolicyTree, ch: &Channel, cost: &dyn CostFunctional, base: LogBase) -> Result<TelescopingReport> {
    if !cost.has_stage_form() {
        return Err(Error::invalid(format!("cost `{}` has no stage decomposition", cost.name())));
    }
    if policy.horizon() > TELESCOPING_MAX_HORIZON {
        return Err(Error::invalid(format!("telescoping check supports horizons up to {TELESCOPING_MAX_HORIZON}")));
    }
    let mass = node_masses(policy, ch)?;
    let mut lhs = 0.0;
    let mut rhs = cost.terminal_quantity(&policy.root().belief, base);
    let mut saturated = false;
    for node in policy.nodes() {
        let m = mass[node.id];
        if m == 0.0 {
            continue;
        }
        match &node.action {
            Some(action) => {
                rhs += m * cost.stage_cost(&node.belief, action, ch, base);
                saturated |= cost.stage_saturates(&node.belief, action, ch, base);
            }
            None => lhs += m * cost.terminal_quantity(&node.belief, base),
        }
    }
    Ok(TelescopingReport { cost: cost.name(), lhs, rhs, residual: (lhs - rhs).abs(), saturated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::dp::{PolicyContext, PolicyRegistry};
    use crate::model::ProblemSpec;
    use crate::objective::{CostRegistry, ErrorProbability, JointEntropyDrift};

    #[test]
    fn uniform_channel_keeps_full_entropy() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 3, cost: &ErrorProbability, node_cap: 10_000, action_set: None };
        let pol = PolicyRegistry::with_builtins().build("hashed(3)", &ctx).unwrap();
        let r = check_telescoping(&pol, &ch, &JointEntropyDrift, LogBase::Bits).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-12);
        assert!((r.rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_resolves_everything() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 1, cost: &ErrorProbability, node_cap: 10_000, action_set: None };
        let pol = PolicyRegistry::with_builtins().build("identity", &ctx).unwrap();
        let r = check_telescoping(&pol, &ch, &JointEntropyDrift, LogBase::Bits).unwrap();
        assert!(r.lhs.abs() < 1e-15 && r.rhs.abs() < 1e-12);
    }

    #[test]
    fn saturation_is_flagged() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 1, cost: &ErrorProbability, node_cap: 10_000, action_set: None };
        let pol = PolicyRegistry::with_builtins().build("identity", &ctx).unwrap();
        let r = check_telescoping(&pol, &ch, &crate::objective::Ejs, LogBase::Bits).unwrap();
        assert!(r.saturated);
        let r = check_telescoping(&pol, &ch, &JointEntropyDrift, LogBase::Bits).unwrap();
        assert!(!r.saturated);
    }

    #[test]
    fn all_stage_costs_telescope_on_random_channels() {
        let spec = ProblemSpec::binary();
        let reg = CostRegistry::with_builtins();
        for seed in 1..=3 {
            let ch = channels::random(&spec, seed).unwrap();
            let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 3, cost: &ErrorProbability, node_cap: 100_000, action_set: None };
            let pol = PolicyRegistry::with_builtins().build("hashed(7)", &ctx).unwrap();
            for name in ["joint_entropy_drift", "conditional_entropy_drift_user1", "conditional_entropy_drift_user2", "ejs"] {
                let r = check_telescoping(&pol, &ch, reg.build(name).unwrap().as_ref(), LogBase::Nats).unwrap();
                assert!(r.residual < 1e-10, "{name} seed {seed}: {r:?}");
            }
        }
    }

    #[test]
    fn error_probability_is_rejected() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 1, cost: &ErrorProbability, node_cap: 100, action_set: None };
        let pol = PolicyRegistry::with_builtins().build("identity", &ctx).unwrap();
        assert!(check_telescoping(&pol, &ch, &ErrorProbability, LogBase::Bits).is_err());
    }
}
