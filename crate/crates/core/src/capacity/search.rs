//! Exhaustive maximization of `Iₙ(λ)` over structured deterministic
//! policies: one joint action per reachable common belief.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_in, DirectedInfoBreakdown, LambdaWeights, DEFAULT_STATE_CAP, STRUCTURED_LOWER_BOUND};
use crate::dp::{PolicyTree, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{
    all_joint_actions, belief_update, joint_action_count, observation_prob, BeliefKey, Channel, JointAction, JointBelief,
    ProblemSpec, ZERO_OBSERVATION,
};

/// Default cap on the number of candidate policies.
pub const DEFAULT_POLICY_CAP: f64 = 1e6;

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub value: f64,
    pub breakdown: DirectedInfoBreakdown,
    pub witness: PolicyTree,
    pub policies_examined: usize,
    pub bound_type: &'static str,
}

/// Action index per canonical belief, per depth.
type Assignment = Vec<BTreeMap<BeliefKey, usize>>;

/// `Π_t |A|^{|Z|^{t-1}}`: every depth-`t` layer has at most `|Z|^{t-1}` nodes.
pub fn policy_count_bound(actions: usize, z_size: usize, horizon: usize) -> f64 {
    (0..horizon).map(|t| (z_size as f64).powi(t as i32) * (actions as f64).ln()).sum::<f64>().exp()
}

fn next_layer(layer: &[JointBelief], chosen: &[usize], actions: &[JointAction], ch: &Channel) -> Result<Vec<JointBelief>> {
    let mut next: BTreeMap<BeliefKey, JointBelief> = BTreeMap::new();
    for (pi, &a) in layer.iter().zip(chosen) {
        for z in 0..ch.z_size() {
            if observation_prob(pi, &actions[a], z, ch) <= ZERO_OBSERVATION {
                continue;
            }
            let post = belief_update(pi, &actions[a], z, ch)?;
            next.entry(post.key()).or_insert(post);
        }
    }
    Ok(next.into_values().collect())
}

fn enumerate(
    depth: usize,
    horizon: usize,
    layer: Vec<JointBelief>,
    actions: &[JointAction],
    ch: &Channel,
    partial: &mut Assignment,
    out: &mut Vec<Assignment>,
) -> Result<()> {
    if depth == horizon {
        out.push(partial.clone());
        return Ok(());
    }
    let combos = actions.len().pow(layer.len() as u32);
    for combo in 0..combos {
        // first node's action is the most significant digit
        let mut chosen = vec![0; layer.len()];
        let mut rest = combo;
        for c in chosen.iter_mut().rev() {
            *c = rest % actions.len();
            rest /= actions.len();
        }
        partial.push(layer.iter().zip(&chosen).map(|(pi, &a)| (pi.key(), a)).collect());
        let next = next_layer(&layer, &chosen, actions, ch)?;
        enumerate(depth + 1, horizon, next, actions, ch, partial, out)?;
        partial.pop();
    }
    Ok(())
}

fn realize(spec: &ProblemSpec, ch: &Channel, horizon: usize, assignment: &Assignment, actions: &[JointAction]) -> Result<PolicyTree> {
    PolicyTree::from_rule(spec, ch, horizon, usize::MAX, |depth, belief| {
        let table = &assignment[depth];
        let a = table.get(&belief.key()).copied().or_else(|| {
            // float drift across a key boundary: fall back to the closest stored belief
            table
                .iter()
                .find(|(k, _)| k.distance(&belief.key()) <= 1000)
                .map(|(_, &a)| a)
        });
        a.map(|a| actions[a].clone()).ok_or(Error::IncompletePolicy { depth })
    })
}

/// Best `Iₙ(λ)` over structured deterministic policies. This class is a
/// subset of all admissible policies, so the value is a lower bound on the
/// true `Cₙ(λ)` and is labelled as such.
pub fn search_cn_lambda(
    spec: &ProblemSpec,
    ch: &Channel,
    horizon: usize,
    lambda: LambdaWeights,
    action_set: Option<&[JointAction]>,
    policy_cap: f64,
) -> Result<SearchResult> {
    lambda.validate()?;
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let actions = match action_set {
        Some(set) if !set.is_empty() => set.to_vec(),
        Some(_) => return Err(Error::invalid("action set is empty")),
        None => {
            let count = joint_action_count(spec).map_or(f64::INFINITY, |c| c as f64);
            if count > policy_cap {
                return Err(Error::BudgetExceeded { what: "structured policies", count, cap: policy_cap });
            }
            all_joint_actions(spec)
        }
    };
    let bound = policy_count_bound(actions.len(), ch.z_size(), horizon);
    if !(bound <= policy_cap) {
        return Err(Error::BudgetExceeded { what: "structured policies", count: bound, cap: policy_cap });
    }
    let mut candidates = Vec::new();
    enumerate(0, horizon, vec![JointBelief::uniform(spec.m1, spec.m2)], &actions, ch, &mut Vec::new(), &mut candidates)?;

    let evaluated: Vec<(f64, DirectedInfoBreakdown)> = candidates
        .par_iter()
        .map(|assignment| -> Result<_> {
            let policy = realize(spec, ch, horizon, assignment, &actions)?;
            let b = evaluate_in(spec, &policy, ch, lambda, DEFAULT_STATE_CAP)?;
            Ok((b.in_lambda, b))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, (v, _)) in evaluated.iter().enumerate() {
        if *v > evaluated[best].0 + TIE_TOLERANCE {
            best = i;
        }
    }
    let witness = realize(spec, ch, horizon, &candidates[best], &actions)?;
    let mut breakdown = evaluated[best].1.clone();
    breakdown.bound_type = Some(STRUCTURED_LOWER_BOUND);
    Ok(SearchResult {
        value: breakdown.in_lambda,
        breakdown,
        witness,
        policies_examined: candidates.len(),
        bound_type: STRUCTURED_LOWER_BOUND,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: LambdaWeights,
    pub value: Option<f64>,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub i3: Option<f64>,
    pub error: Option<String>,
}

/// Runs [`search_cn_lambda`] for every weight vector; a failing row records
/// its error and the sweep carries on.
pub fn lambda_sweep(
    spec: &ProblemSpec,
    ch: &Channel,
    horizon: usize,
    lambdas: &[LambdaWeights],
    action_set: Option<&[JointAction]>,
    policy_cap: f64,
) -> Vec<SweepRow> {
    lambdas
        .par_iter()
        .map(|&lambda| match search_cn_lambda(spec, ch, horizon, lambda, action_set, policy_cap) {
            Ok(r) => SweepRow {
                lambda,
                value: Some(r.value),
                i1: Some(r.breakdown.i1),
                i2: Some(r.breakdown.i2),
                i3: Some(r.breakdown.i3),
                error: None,
            },
            Err(e) => SweepRow { lambda, value: None, i1: None, i2: None, i3: None, error: Some(e.to_string()) },
        })
        .collect()
}

/// Distinct beliefs per depth of a policy, for reporting.
pub fn layer_sizes(policy: &PolicyTree) -> Vec<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for n in policy.nodes() {
        *counts.entry(n.depth).or_insert(0) += 1;
    }
    (0..=policy.horizon()).map(|d| counts.get(&d).copied().unwrap_or(0)).collect()
}
