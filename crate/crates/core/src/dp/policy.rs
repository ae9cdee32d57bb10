use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{backward_dp, build_reachable_tree, Branch};
use crate::descriptor::parse_descriptor;
use crate::error::{Error, Result};
use crate::model::{
    all_joint_actions, belief_update, joint_action_count, observation_prob, BeliefKey, Channel, EncoderFunction,
    JointAction, JointBelief, ProblemSpec, User, ZERO_OBSERVATION,
};
use crate::objective::CostFunctional;

#[derive(Debug, Clone, Serialize)]
pub struct PolicyNode {
    pub id: usize,
    pub depth: usize,
    pub belief: JointBelief,
    /// `None` exactly at the horizon.
    pub action: Option<JointAction>,
    /// Value-to-go when the tree came out of the dynamic program.
    pub value: Option<f64>,
    pub children: Vec<Branch>,
    pub pruned_mass: f64,
}

/// A structured policy `e_t = θ_t[π_{t-1}]` restricted to the beliefs it
/// actually visits. Nodes are stored breadth first; node 0 is the uniform
/// root.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyTree {
    horizon: usize,
    restricted_actions: bool,
    nodes: Vec<PolicyNode>,
    #[serde(skip)]
    index: HashMap<(usize, BeliefKey), usize>,
}

const LOOKUP_FALLBACK_TOLERANCE: f64 = 1e-9;

impl PolicyTree {
    /// Expands the policy forward from the uniform prior, asking `rule` for
    /// the action at every visited `(depth, belief)`.
    pub fn from_rule<F>(spec: &ProblemSpec, ch: &Channel, horizon: usize, node_cap: usize, mut rule: F) -> Result<Self>
    where
        F: FnMut(usize, &JointBelief) -> Result<JointAction>,
    {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !ch.matches(spec) {
            return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
        }
        let root = JointBelief::uniform(spec.m1, spec.m2);
        let mut tree = PolicyTree { horizon, restricted_actions: false, nodes: Vec::new(), index: HashMap::new() };
        tree.push(0, root);
        let mut cursor = 0;
        while cursor < tree.nodes.len() {
            let depth = tree.nodes[cursor].depth;
            if depth == horizon {
                cursor += 1;
                continue;
            }
            let belief = tree.nodes[cursor].belief.clone();
            let action = rule(depth, &belief)?;
            let mut children = Vec::new();
            let mut pruned = 0.0;
            for z in 0..ch.z_size() {
                let p = observation_prob(&belief, &action, z, ch);
                if p <= ZERO_OBSERVATION {
                    pruned += p;
                    continue;
                }
                let next = belief_update(&belief, &action, z, ch)?;
                let key = (depth + 1, next.key());
                let child = match tree.index.get(&key) {
                    Some(&id) => id,
                    None => tree.push(depth + 1, next),
                };
                children.push(Branch { z, prob: p, child });
            }
            if tree.nodes.len() > node_cap {
                return Err(Error::BudgetExceeded {
                    what: "policy tree nodes",
                    count: tree.nodes.len() as f64,
                    cap: node_cap as f64,
                });
            }
            let node = &mut tree.nodes[cursor];
            node.action = Some(action);
            node.children = children;
            node.pruned_mass = pruned;
            cursor += 1;
        }
        Ok(tree)
    }

    fn push(&mut self, depth: usize, belief: JointBelief) -> usize {
        let id = self.nodes.len();
        self.index.insert((depth, belief.key()), id);
        self.nodes.push(PolicyNode {
            id,
            depth,
            belief,
            action: None,
            value: None,
            children: Vec::new(),
            pruned_mass: 0.0,
        });
        id
    }

    pub(crate) fn set_value(&mut self, id: usize, value: f64) {
        self.nodes[id].value = Some(value);
    }

    pub(crate) fn mark_restricted(&mut self, restricted: bool) {
        self.restricted_actions = restricted;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted_actions
    }

    pub fn root(&self) -> &PolicyNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[PolicyNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &PolicyNode {
        &self.nodes[id]
    }

    pub fn child(&self, id: usize, z: usize) -> Option<usize> {
        self.nodes[id].children.iter().find(|b| b.z == z).map(|b| b.child)
    }

    /// Node holding `belief` at `depth`. Falls back to a tolerance match when
    /// float drift moved the canonical key across a rounding boundary.
    pub fn lookup(&self, depth: usize, belief: &JointBelief) -> Option<usize> {
        if let Some(&id) = self.index.get(&(depth, belief.key())) {
            return Some(id);
        }
        self.nodes
            .iter()
            .filter(|n| n.depth == depth)
            .find(|n| {
                n.belief
                    .probs()
                    .iter()
                    .zip(belief.probs())
                    .all(|(a, b)| (a - b).abs() < LOOKUP_FALLBACK_TOLERANCE)
            })
            .map(|n| n.id)
    }

    pub fn action_at(&self, depth: usize, belief: &JointBelief) -> Result<&JointAction> {
        self.lookup(depth, belief)
            .and_then(|id| self.nodes[id].action.as_ref())
            .ok_or(Error::IncompletePolicy { depth })
    }
}

/// Everything a policy provider may need to construct its tree.
pub struct PolicyContext<'a> {
    pub spec: &'a ProblemSpec,
    pub channel: &'a Channel,
    pub horizon: usize,
    /// Objective minimized by optimizing providers.
    pub cost: &'a dyn CostFunctional,
    pub node_cap: usize,
    /// Optional restriction of the candidate joint actions.
    pub action_set: Option<&'a [JointAction]>,
}

impl PolicyContext<'_> {
    fn candidate_actions(&self) -> Result<Vec<JointAction>> {
        match self.action_set {
            Some(set) if !set.is_empty() => Ok(set.to_vec()),
            Some(_) => Err(Error::invalid("action set is empty")),
            None => {
                let count = joint_action_count(self.spec).unwrap_or(usize::MAX);
                if count > self.node_cap {
                    return Err(Error::BudgetExceeded { what: "joint actions", count: count as f64, cap: self.node_cap as f64 });
                }
                Ok(all_joint_actions(self.spec))
            }
        }
    }
}

/// A named way of producing a policy tree.
pub trait PolicyProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, ctx: &PolicyContext<'_>, args: &[f64]) -> Result<PolicyTree>;
}

/// Optimal policy of the backward dynamic program for `ctx.cost`.
struct DpOptimal;

/// The same joint action (by enumeration index) at every node.
struct Constant;

/// Each user sends `w mod |X|`, at every node.
struct Identity;

/// A fixed pseudo-random action per `(depth, belief)`, keyed by a seed.
struct Hashed;

fn no_args(name: &str, args: &[f64]) -> Result<()> {
    if !args.is_empty() {
        return Err(Error::invalid(format!("policy `{name}` takes no arguments")));
    }
    Ok(())
}

fn integer_arg(name: &str, args: &[f64]) -> Result<u64> {
    match args {
        [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as u64),
        _ => Err(Error::invalid(format!("policy `{name}` takes one non-negative integer argument"))),
    }
}

impl PolicyProvider for DpOptimal {
    fn name(&self) -> &'static str {
        "dp-optimal"
    }

    fn build(&self, ctx: &PolicyContext<'_>, args: &[f64]) -> Result<PolicyTree> {
        no_args(self.name(), args)?;
        let tree = build_reachable_tree(ctx.spec, ctx.channel, ctx.horizon, ctx.action_set, ctx.node_cap)?;
        Ok(backward_dp(&tree, ctx.channel, ctx.cost)?.policy)
    }
}

impl PolicyProvider for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn build(&self, ctx: &PolicyContext<'_>, args: &[f64]) -> Result<PolicyTree> {
        let idx = integer_arg(self.name(), args)? as usize;
        let actions = ctx.candidate_actions()?;
        let action = actions
            .get(idx)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("action index {idx} out of range 0..{}", actions.len())))?;
        PolicyTree::from_rule(ctx.spec, ctx.channel, ctx.horizon, ctx.node_cap, |_, _| Ok(action.clone()))
    }
}

impl PolicyProvider for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn build(&self, ctx: &PolicyContext<'_>, args: &[f64]) -> Result<PolicyTree> {
        no_args(self.name(), args)?;
        let s = ctx.spec;
        let action = JointAction::new(
            EncoderFunction::new(User::One, (0..s.m1).map(|w| w % s.x1_size).collect(), s.x1_size)?,
            EncoderFunction::new(User::Two, (0..s.m2).map(|w| w % s.x2_size).collect(), s.x2_size)?,
        )?;
        PolicyTree::from_rule(ctx.spec, ctx.channel, ctx.horizon, ctx.node_cap, |_, _| Ok(action.clone()))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic hash of a seed, a depth and a belief's canonical key.
pub(crate) fn belief_hash(seed: u64, depth: usize, belief: &JointBelief) -> u64 {
    let mut h = splitmix64(seed ^ (depth as u64).rotate_left(32));
    for &v in belief.probs() {
        h = splitmix64(h ^ ((v * 1e12).round() as i64 as u64));
    }
    h
}

impl PolicyProvider for Hashed {
    fn name(&self) -> &'static str {
        "hashed"
    }

    fn build(&self, ctx: &PolicyContext<'_>, args: &[f64]) -> Result<PolicyTree> {
        let seed = integer_arg(self.name(), args)?;
        let actions = ctx.candidate_actions()?;
        PolicyTree::from_rule(ctx.spec, ctx.channel, ctx.horizon, ctx.node_cap, |depth, belief| {
            let h = belief_hash(seed, depth, belief);
            Ok(actions[(h % actions.len() as u64) as usize].clone())
        })
    }
}

pub struct PolicyRegistry {
    providers: BTreeMap<&'static str, Box<dyn PolicyProvider>>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        PolicyRegistry { providers: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(DpOptimal));
        reg.register(Box::new(Constant));
        reg.register(Box::new(Identity));
        reg.register(Box::new(Hashed));
        reg
    }

    pub fn register(&mut self, provider: Box<dyn PolicyProvider>) {
        self.providers.insert(provider.name(), provider);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.providers.keys().copied()
    }

    /// Builds the policy named by a descriptor such as `hashed(7)`.
    pub fn build(&self, descriptor: &str, ctx: &PolicyContext<'_>) -> Result<PolicyTree> {
        let (name, args) = parse_descriptor(descriptor)?;
        let provider = self.providers.get(name.as_str()).ok_or(Error::UnknownName { kind: "policy", name })?;
        let mut tree = provider.build(ctx, &args)?;
        if ctx.action_set.is_some() {
            tree.mark_restricted(true);
        }
        Ok(tree)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::objective::ErrorProbability;

    fn ctx<'a>(spec: &'a ProblemSpec, ch: &'a Channel, horizon: usize) -> PolicyContext<'a> {
        PolicyContext { spec, channel: ch, horizon, cost: &ErrorProbability, node_cap: 100_000, action_set: None }
    }

    #[test]
    fn constant_policy_on_uniform_channel_is_a_chain() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let reg = PolicyRegistry::with_builtins();
        let tree = reg.build("constant(5)", &ctx(&spec, &ch, 3)).unwrap();
        assert_eq!(tree.nodes().len(), 4);
        assert_eq!(tree.root().action.as_ref().unwrap().index(&spec), 5);
        assert!(tree.nodes()[3].action.is_none());
    }

    #[test]
    fn every_nonleaf_node_has_one_action() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let reg = PolicyRegistry::with_builtins();
        for name in ["dp-optimal", "identity", "hashed(3)", "constant(6)"] {
            let tree = reg.build(name, &ctx(&spec, &ch, 3)).unwrap();
            for node in tree.nodes() {
                assert_eq!(node.action.is_some(), node.depth < 3, "{name}");
                let id = tree.lookup(node.depth, &node.belief).unwrap();
                assert_eq!(id, node.id);
            }
        }
    }

    #[test]
    fn registry_errors() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let reg = PolicyRegistry::with_builtins();
        assert!(matches!(reg.build("greedy", &ctx(&spec, &ch, 1)), Err(Error::UnknownName { .. })));
        assert!(reg.build("constant(99)", &ctx(&spec, &ch, 1)).is_err());
        assert!(reg.build("hashed", &ctx(&spec, &ch, 1)).is_err());
        assert_eq!(reg.names().count(), 4);
    }

    #[test]
    fn missing_belief_is_incomplete_policy() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let tree = PolicyRegistry::with_builtins().build("identity", &ctx(&spec, &ch, 1)).unwrap();
        let other = JointBelief::point_mass(2, 2, 1, 1);
        assert!(matches!(tree.action_at(0, &other), Err(Error::IncompletePolicy { depth: 0 })));
    }
}
