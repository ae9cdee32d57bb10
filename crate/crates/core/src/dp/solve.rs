use std::collections::HashMap;

use rayon::prelude::*;

use super::{BeliefTree, PolicyTree, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{BeliefKey, Channel, JointBelief};
use crate::objective::CostFunctional;

/// Output of [`backward_dp`]: per-layer values and minimizing action indices
/// over the whole reachable tree, plus the optimal policy extracted from it.
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub values: Vec<Vec<f64>>,
    /// Index into [`BeliefTree::actions`]; `None` on the last layer.
    pub choices: Vec<Vec<Option<usize>>>,
    pub policy: PolicyTree,
    pub root_value: f64,
    pub restricted: bool,
    pub cost_name: String,
}

/// `V_t(π) = min_e [c(π, e) + Σ_z P(z | π, e) V_{t+1}(F(π, e, z))]` with
/// `V_{n+1} = terminal`, evaluated on the reachable tree from the leaves up.
pub fn backward_dp(tree: &BeliefTree, ch: &Channel, cost: &dyn CostFunctional) -> Result<DpSolution> {
    if !ch.matches(tree.spec()) {
        return Err(Error::DimensionMismatch("channel does not match the tree".into()));
    }
    let base = tree.spec().log_base;
    let n = tree.horizon();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut choices: Vec<Vec<Option<usize>>> = vec![Vec::new(); n + 1];

    values[n] = tree.layer(n).par_iter().map(|node| cost.terminal_cost(&node.belief, base)).collect();
    choices[n] = vec![None; tree.layer(n).len()];

    for depth in (0..n).rev() {
        let next = &values[depth + 1];
        let backed: Vec<(usize, f64)> = tree
            .layer(depth)
            .par_iter()
            .map(|node| {
                let mut best = (0usize, f64::INFINITY);
                for (a, (action, exp)) in tree.actions().iter().zip(&node.expansions).enumerate() {
                    let mut v = cost.stage_cost(&node.belief, action, ch, base);
                    for b in &exp.branches {
                        v += b.prob * next[b.child];
                    }
                    if v < best.1 - TIE_TOLERANCE {
                        best = (a, v);
                    }
                }
                best
            })
            .collect();
        choices[depth] = backed.iter().map(|&(a, _)| Some(a)).collect();
        values[depth] = backed.into_iter().map(|(_, v)| v).collect();
    }

    let keys: Vec<HashMap<BeliefKey, usize>> = (0..=n)
        .map(|d| tree.layer(d).iter().enumerate().map(|(i, node)| (node.belief.key(), i)).collect())
        .collect();
    let locate = |depth: usize, belief: &JointBelief| {
        keys[depth]
            .get(&belief.key())
            .copied()
            .or_else(|| {
                tree.layer(depth).iter().position(|node| {
                    node.belief.probs().iter().zip(belief.probs()).all(|(a, b)| (a - b).abs() < 1e-9)
                })
            })
            .ok_or(Error::IncompletePolicy { depth })
    };

    let mut policy = PolicyTree::from_rule(tree.spec(), ch, n, usize::MAX, |depth, belief| {
        let id = locate(depth, belief)?;
        let a = choices[depth][id].ok_or(Error::IncompletePolicy { depth })?;
        Ok(tree.actions()[a].clone())
    })?;
    let annotations: Vec<(usize, f64)> = policy
        .nodes()
        .iter()
        .map(|node| locate(node.depth, &node.belief).map(|id| (node.id, values[node.depth][id])))
        .collect::<Result<_>>()?;
    for (id, v) in annotations {
        policy.set_value(id, v);
    }
    policy.mark_restricted(tree.is_restricted());

    Ok(DpSolution {
        root_value: values[0][0],
        values,
        choices,
        policy,
        restricted: tree.is_restricted(),
        cost_name: cost.name().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::dp::{build_reachable_tree, DEFAULT_NODE_CAP};
    use crate::model::{terminal_cost, JointAction, ProblemSpec};
    use crate::objective::ErrorProbability;

    fn solve(spec: &ProblemSpec, ch: &Channel, n: usize) -> DpSolution {
        let tree = build_reachable_tree(spec, ch, n, None, DEFAULT_NODE_CAP).unwrap();
        backward_dp(&tree, ch, &ErrorProbability).unwrap()
    }

    #[test]
    fn identity_channel_one_shot_is_error_free() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let sol = solve(&spec, &ch, 1);
        assert_eq!(sol.root_value, 0.0);
        let a = sol.policy.root().action.as_ref().unwrap();
        assert!(a.e1.is_injective() && a.e2.is_injective());
    }

    #[test]
    fn uniform_channel_learns_nothing() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        for n in 1..=3 {
            assert!((solve(&spec, &ch, n).root_value - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn leaves_carry_terminal_cost() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 5).unwrap();
        let sol = solve(&spec, &ch, 2);
        for node in sol.policy.nodes().iter().filter(|n| n.depth == 2) {
            assert!((node.value.unwrap() - terminal_cost(&node.belief)).abs() < 1e-14);
        }
        assert_eq!(sol.policy.root().value.unwrap(), sol.root_value);
    }

    #[test]
    fn restricted_action_set_is_flagged() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let a = JointAction::from_values(&spec, vec![0, 1], vec![0, 0]).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 2, Some(&[a]), DEFAULT_NODE_CAP).unwrap();
        let sol = backward_dp(&tree, &ch, &ErrorProbability).unwrap();
        assert!(sol.restricted && sol.policy.is_restricted());
    }
}
