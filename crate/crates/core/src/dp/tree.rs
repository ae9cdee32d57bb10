use std::collections::HashMap;

use rayon::prelude::*;

use super::Branch;
use crate::error::{Error, Result};
use crate::model::{
    all_joint_actions, belief_update, joint_action_count, observation_prob, BeliefKey, Channel, JointAction,
    JointBelief, ProblemSpec, ZERO_OBSERVATION,
};

pub const DEFAULT_NODE_CAP: usize = 5_000_000;

/// Outgoing branches of a node under one candidate action.
#[derive(Debug, Clone, Default)]
pub struct Expansion {
    pub branches: Vec<Branch>,
    /// Mass of observations pruned as impossible.
    pub pruned_mass: f64,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub belief: JointBelief,
    /// One entry per candidate action; empty at the last layer.
    pub expansions: Vec<Expansion>,
}

/// Every belief reachable from the uniform prior within the horizon, one
/// layer per depth, deduplicated by canonical key within a layer.
#[derive(Debug, Clone)]
pub struct BeliefTree {
    spec: ProblemSpec,
    horizon: usize,
    actions: Vec<JointAction>,
    restricted: bool,
    layers: Vec<Vec<TreeNode>>,
}

impl BeliefTree {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self) -> &[JointAction] {
        &self.actions
    }

    /// True when built from a caller-supplied subset of the joint actions.
    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn layer(&self, depth: usize) -> &[TreeNode] {
        &self.layers[depth]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

type RawExpansion = Vec<(usize, f64, Option<JointBelief>)>;

fn expand(belief: &JointBelief, action: &JointAction, ch: &Channel) -> RawExpansion {
    (0..ch.z_size())
        .map(|z| {
            let p = observation_prob(belief, action, z, ch);
            if p <= ZERO_OBSERVATION {
                (z, p, None)
            } else {
                // p > 0 guarantees the update succeeds
                (z, p, belief_update(belief, action, z, ch).ok())
            }
        })
        .collect()
}

pub fn build_reachable_tree(
    spec: &ProblemSpec,
    ch: &Channel,
    horizon: usize,
    action_set: Option<&[JointAction]>,
    node_cap: usize,
) -> Result<BeliefTree> {
    spec.validate()?;
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let (actions, restricted) = match action_set {
        Some(set) if set.is_empty() => return Err(Error::invalid("action set is empty")),
        Some(set) => (set.to_vec(), true),
        None => {
            let count = joint_action_count(spec).unwrap_or(usize::MAX);
            if count > node_cap {
                return Err(Error::BudgetExceeded { what: "joint actions", count: count as f64, cap: node_cap as f64 });
            }
            (all_joint_actions(spec), false)
        }
    };

    let root = TreeNode { belief: JointBelief::uniform(spec.m1, spec.m2), expansions: Vec::new() };
    let mut layers = vec![vec![root]];
    let mut total = 1usize;

    for depth in 0..horizon {
        let raw: Vec<Vec<RawExpansion>> = layers[depth]
            .par_iter()
            .map(|node| actions.iter().map(|a| expand(&node.belief, a, ch)).collect())
            .collect();

        let mut next: Vec<TreeNode> = Vec::new();
        let mut index: HashMap<BeliefKey, usize> = HashMap::new();
        for (node, per_action) in layers[depth].iter_mut().zip(raw) {
            node.expansions = per_action
                .into_iter()
                .map(|branches| {
                    let mut exp = Expansion::default();
                    for (z, prob, child) in branches {
                        match child {
                            None => exp.pruned_mass += prob,
                            Some(belief) => {
                                let child = *index.entry(belief.key()).or_insert_with(|| {
                                    next.push(TreeNode { belief, expansions: Vec::new() });
                                    next.len() - 1
                                });
                                exp.branches.push(Branch { z, prob, child });
                            }
                        }
                    }
                    exp
                })
                .collect();
            if total + next.len() > node_cap {
                return Err(Error::BudgetExceeded {
                    what: "belief tree nodes",
                    count: (total + next.len()) as f64,
                    cap: node_cap as f64,
                });
            }
        }
        total += next.len();
        layers.push(next);
    }

    Ok(BeliefTree { spec: *spec, horizon, actions, restricted, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;

    #[test]
    fn uniform_channel_has_one_belief_per_depth() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 3, None, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(tree.layer_sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn identity_channel_injective_encoders_give_point_masses() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let a = JointAction::from_values(&spec, vec![0, 1], vec![0, 1]).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 1, Some(&[a]), DEFAULT_NODE_CAP).unwrap();
        assert!(tree.is_restricted());
        assert_eq!(tree.layer_sizes(), vec![1, 4]);
        assert!(tree.layer(1).iter().all(|n| n.belief.is_point_mass()));
    }

    #[test]
    fn transition_mass_is_conserved() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 11).unwrap();
        let tree = build_reachable_tree(&spec, &ch, 2, None, DEFAULT_NODE_CAP).unwrap();
        for depth in 0..2 {
            for node in tree.layer(depth) {
                for exp in &node.expansions {
                    let s: f64 = exp.branches.iter().map(|b| b.prob).sum::<f64>() + exp.pruned_mass;
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn node_cap_fails_loudly() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 3).unwrap();
        let err = build_reachable_tree(&spec, &ch, 3, None, 50).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        assert!(build_reachable_tree(&spec, &ch, 0, None, DEFAULT_NODE_CAP).is_err());
        assert!(build_reachable_tree(&spec, &ch, 1, Some(&[]), DEFAULT_NODE_CAP).is_err());
        let other = ProblemSpec { z_size: 3, ..spec };
        assert!(build_reachable_tree(&other, &ch, 1, None, DEFAULT_NODE_CAP).is_err());
    }
}
