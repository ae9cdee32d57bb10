use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::PolicyTree;
use crate::error::{Error, Result};
use crate::model::{ml_decode, observation_prob, terminal_cost, Channel, ZERO_OBSERVATION};
use crate::info::LogBase;
use crate::objective::CostFunctional;

/// Probability of reaching each node, recomputed from the channel rather than
/// read off the stored branch probabilities.
pub(crate) fn node_masses(policy: &PolicyTree, ch: &Channel) -> Result<Vec<f64>> {
    let mut mass = vec![0.0; policy.nodes().len()];
    mass[0] = 1.0;
    for node in policy.nodes() {
        if node.depth == policy.horizon() || mass[node.id] == 0.0 {
            continue;
        }
        let action = node.action.as_ref().ok_or(Error::IncompletePolicy { depth: node.depth })?;
        for z in 0..ch.z_size() {
            let p = observation_prob(&node.belief, action, z, ch);
            if p <= ZERO_OBSERVATION {
                continue;
            }
            let child = policy.child(node.id, z).ok_or(Error::IncompletePolicy { depth: node.depth + 1 })?;
            mass[child] += mass[node.id] * p;
        }
    }
    Ok(mass)
}

/// Error probability `E[1 - max Πₙ]` of a policy with ML decoding.
pub fn evaluate_policy_exact(policy: &PolicyTree, ch: &Channel) -> Result<f64> {
    let mass = node_masses(policy, ch)?;
    Ok(policy
        .nodes()
        .iter()
        .filter(|n| n.depth == policy.horizon())
        .map(|n| mass[n.id] * terminal_cost(&n.belief))
        .sum())
}

/// Expected total cost (stage costs plus terminal) of a policy under `cost`.
pub fn evaluate_policy_cost(
    policy: &PolicyTree,
    ch: &Channel,
    cost: &dyn CostFunctional,
    base: LogBase,
) -> Result<f64> {
    let mass = node_masses(policy, ch)?;
    let mut total = 0.0;
    for node in policy.nodes() {
        let m = mass[node.id];
        if m == 0.0 {
            continue;
        }
        match &node.action {
            Some(action) => total += m * cost.stage_cost(&node.belief, action, ch, base),
            None => total += m * cost.terminal_cost(&node.belief, base),
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_half_width: f64,
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Runs `trials` independent transmissions through the policy. Trial `i`
/// draws from its own ChaCha stream `(seed, i)`, so the estimate does not
/// depend on scheduling.
pub fn simulate_monte_carlo(policy: &PolicyTree, ch: &Channel, trials: u64, seed: u64) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let root = &policy.root().belief;
    let (m1, m2) = (root.m1(), root.m2());
    let run = |trial: u64| -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let w1 = rng.gen_range(0..m1);
        let w2 = rng.gen_range(0..m2);
        let mut id = 0;
        while policy.node(id).depth < policy.horizon() {
            let node = policy.node(id);
            let action = node.action.as_ref().ok_or(Error::IncompletePolicy { depth: node.depth })?;
            let row = ch.row(action.e1.apply(w1), action.e2.apply(w2));
            let z = sample_index(row, rng.gen::<f64>());
            id = policy.child(id, z).ok_or(Error::IncompletePolicy { depth: node.depth + 1 })?;
        }
        Ok(ml_decode(&policy.node(id).belief) != (w1, w2))
    };
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| run(t).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let rate = errors as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        trials,
        errors,
        error_rate: rate,
        ci_half_width: 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::dp::{backward_dp, build_reachable_tree, PolicyContext, PolicyRegistry, DEFAULT_NODE_CAP};
    use crate::model::{JointAction, ProblemSpec};
    use crate::objective::ErrorProbability;

    #[test]
    fn uniform_channel_any_policy() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let ctx = PolicyContext { spec: &spec, channel: &ch, horizon: 2, cost: &ErrorProbability, node_cap: 1000, action_set: None };
        let pol = PolicyRegistry::with_builtins().build("hashed(1)", &ctx).unwrap();
        assert!((evaluate_policy_exact(&pol, &ch).unwrap() - 0.75).abs() < 1e-15);
        let mc = simulate_monte_carlo(&pol, &ch, 100_000, 9).unwrap();
        assert!((mc.error_rate - 0.75).abs() <= mc.ci_half_width);
    }

    #[test]
    fn optimal_policy_matches_dp_value() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.2).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 3, None, DEFAULT_NODE_CAP).unwrap();
        let sol = backward_dp(&tree, &ch, &ErrorProbability).unwrap();
        let v = evaluate_policy_exact(&sol.policy, &ch).unwrap();
        assert!((v - sol.root_value).abs() < 1e-12);
    }

    #[test]
    fn constant_policy_n1_by_enumeration() {
        // independent route: sum over (w1, w2, z) of P(w, z) 1{decode(z) != w}
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let a = JointAction::from_values(&spec, vec![0, 1], vec![1, 1]).unwrap();
        let pol = PolicyTree::from_rule(&spec, &ch, 1, 100, |_, _| Ok(a.clone())).unwrap();
        let mut correct = 0.0;
        for z in 0..2 {
            let joint: Vec<f64> = (0..4).map(|w| 0.25 * a.likelihood(&ch, w / 2, w % 2, z)).collect();
            correct += joint.iter().copied().fold(0.0, f64::max);
        }
        let v = evaluate_policy_exact(&pol, &ch).unwrap();
        assert!((v - (1.0 - correct)).abs() < 1e-15);
        assert!((v - 0.55).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_simulation_is_error_free() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 1, None, DEFAULT_NODE_CAP).unwrap();
        let sol = backward_dp(&tree, &ch, &ErrorProbability).unwrap();
        let mc = simulate_monte_carlo(&sol.policy, &ch, 10_000, 1).unwrap();
        assert_eq!(mc.errors, 0);
        assert_eq!(mc.ci_half_width, 0.0);
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 2).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 2, None, DEFAULT_NODE_CAP).unwrap();
        let sol = backward_dp(&tree, &ch, &ErrorProbability).unwrap();
        let a = simulate_monte_carlo(&sol.policy, &ch, 20_000, 42).unwrap();
        let b = simulate_monte_carlo(&sol.policy, &ch, 20_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(simulate_monte_carlo(&sol.policy, &ch, 0, 42).is_err());
    }
}
