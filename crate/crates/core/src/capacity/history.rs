//! Oracles built from the full joint law of `(W¹, W², X¹_{1:n}, X²_{1:n}, Z_{1:n})`
//! under a structured policy, enumerated record by record.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{joint_kernel_step, DirectedInfoBreakdown, JointState, LambdaWeights};
use crate::dp::PolicyTree;
use crate::error::{Error, Result};
use crate::info::LogBase;
use crate::model::{induced_input_marginal, private_belief_update, BeliefKey, Channel, PrivateBelief, ProblemSpec, User};

/// Default cap on `M¹M²|Z|ⁿ` enumerated records.
pub const DEFAULT_HISTORY_CAP: f64 = 1e7;

/// One positive-probability realization.
#[derive(Debug, Clone)]
struct Record {
    w1: usize,
    w2: usize,
    x1: Vec<usize>,
    x2: Vec<usize>,
    z: Vec<usize>,
    /// Policy node visited before each step, plus the final node.
    nodes: Vec<usize>,
    pihat1: Vec<PrivateBelief>,
    pihat2: Vec<PrivateBelief>,
    p: f64,
}

fn enumerate(spec: &ProblemSpec, policy: &PolicyTree, ch: &Channel, cap: f64) -> Result<Vec<Record>> {
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    let n = policy.horizon();
    let count = spec.pair_count() as f64 * (ch.z_size() as f64).powi(n as i32);
    if count > cap {
        return Err(Error::BudgetExceeded { what: "full-history records", count, cap });
    }
    let prior = 1.0 / spec.pair_count() as f64;
    let mut out = Vec::new();
    for w1 in 0..spec.m1 {
        for w2 in 0..spec.m2 {
            let start = Record {
                w1,
                w2,
                x1: Vec::new(),
                x2: Vec::new(),
                z: Vec::new(),
                nodes: vec![0],
                pihat1: vec![PrivateBelief::uniform(User::One, spec.m1)],
                pihat2: vec![PrivateBelief::uniform(User::Two, spec.m2)],
                p: prior,
            };
            extend(policy, ch, start, &mut out)?;
        }
    }
    Ok(out)
}

fn extend(policy: &PolicyTree, ch: &Channel, rec: Record, out: &mut Vec<Record>) -> Result<()> {
    let id = *rec.nodes.last().unwrap();
    let node = policy.node(id);
    if node.depth == policy.horizon() {
        out.push(rec);
        return Ok(());
    }
    let e = node.action.as_ref().ok_or(Error::IncompletePolicy { depth: node.depth })?;
    let (x1, x2) = (e.e1.apply(rec.w1), e.e2.apply(rec.w2));
    let next1 = private_belief_update(rec.pihat1.last().unwrap(), &e.e1, x1)?;
    let next2 = private_belief_update(rec.pihat2.last().unwrap(), &e.e2, x2)?;
    for (z, &q) in ch.row(x1, x2).iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        let child = policy.child(id, z).ok_or(Error::IncompletePolicy { depth: node.depth + 1 })?;
        let mut r = rec.clone();
        r.x1.push(x1);
        r.x2.push(x2);
        r.z.push(z);
        r.nodes.push(child);
        r.pihat1.push(next1.clone());
        r.pihat2.push(next2.clone());
        r.p *= q;
        extend(policy, ch, r, out)?;
    }
    Ok(())
}

fn law<F: Fn(&Record) -> Vec<usize>>(records: &[Record], key: F) -> BTreeMap<Vec<usize>, f64> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(key(r)).or_insert(0.0) += r.p;
    }
    m
}

fn entropy_of<F: Fn(&Record) -> Vec<usize>>(records: &[Record], key: F, base: LogBase) -> f64 {
    law(records, key).values().filter(|&&p| p > 0.0).map(|&p| -p * base.log(p)).sum()
}

fn concat(parts: &[&[usize]]) -> Vec<usize> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// `I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)` on the record law.
fn conditional_mi<A, B, C>(records: &[Record], a: A, b: B, c: C, base: LogBase) -> f64
where
    A: Fn(&Record) -> Vec<usize>,
    B: Fn(&Record) -> Vec<usize>,
    C: Fn(&Record) -> Vec<usize>,
{
    let hac = entropy_of(records, |r| concat(&[&a(r), &c(r)]), base);
    let hbc = entropy_of(records, |r| concat(&[&b(r), &c(r)]), base);
    let habc = entropy_of(records, |r| concat(&[&a(r), &b(r), &c(r)]), base);
    let hc = entropy_of(records, &c, base);
    hac + hbc - habc - hc
}

/// Directed informations computed directly from the full joint law.
pub fn full_history_in(
    spec: &ProblemSpec,
    policy: &PolicyTree,
    ch: &Channel,
    lambda: LambdaWeights,
    cap: f64,
) -> Result<DirectedInfoBreakdown> {
    lambda.validate()?;
    let records = enumerate(spec, policy, ch, cap)?;
    let base = spec.log_base;
    let n = policy.horizon();
    let mut i1 = Vec::with_capacity(n);
    let mut i2 = Vec::with_capacity(n);
    let mut i3 = Vec::with_capacity(n);
    for t in 0..n {
        let zt = |r: &Record| vec![r.z[t]];
        i1.push(conditional_mi(&records, |r| vec![r.x1[t]], zt, |r| concat(&[&r.x2[..=t], &r.z[..t]]), base));
        i2.push(conditional_mi(&records, |r| vec![r.x2[t]], zt, |r| concat(&[&r.x1[..=t], &r.z[..t]]), base));
        i3.push(conditional_mi(&records, |r| vec![r.x1[t], r.x2[t]], zt, |r| r.z[..t].to_vec(), base));
    }
    Ok(DirectedInfoBreakdown::from_per_t(i1, i2, i3, lambda, base))
}

/// `I(W¹, W²; Z_{1:n})` from the full joint law.
pub fn message_information(spec: &ProblemSpec, policy: &PolicyTree, ch: &Channel, cap: f64) -> Result<f64> {
    let records = enumerate(spec, policy, ch, cap)?;
    let base = spec.log_base;
    let hw = entropy_of(&records, |r| vec![r.w1, r.w2], base);
    let hz = entropy_of(&records, |r| r.z.clone(), base);
    let hwz = entropy_of(&records, |r| concat(&[&[r.w1, r.w2], &r.z]), base);
    Ok(hw + hz - hwz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub histories: u64,
    /// `|P(x¹,x²|h) - P(x¹|h¹) P(x²|h²)|`.
    pub max_product_deviation: f64,
    /// `|P(xⁱ|hⁱ) - Σ_w 1{eⁱ(w)=xⁱ} π̂ⁱ(w)|`.
    pub max_marginal_deviation: f64,
    pub max_deviation: f64,
}

/// Checks that, given the past, the two users' current inputs are
/// conditionally independent and each is drawn through its encoder from its
/// private belief.
pub fn check_factorization(spec: &ProblemSpec, policy: &PolicyTree, ch: &Channel, cap: f64) -> Result<FactorizationReport> {
    let records = enumerate(spec, policy, ch, cap)?;
    let (xs1, xs2) = (ch.x1_size(), ch.x2_size());
    let mut report = FactorizationReport { histories: 0, max_product_deviation: 0.0, max_marginal_deviation: 0.0, max_deviation: 0.0 };
    for t in 0..policy.horizon() {
        let h = |r: &Record| concat(&[&r.x1[..t], &r.x2[..t], &r.z[..t]]);
        let h1 = |r: &Record| concat(&[&r.x1[..t], &r.z[..t]]);
        let h2 = |r: &Record| concat(&[&r.x2[..t], &r.z[..t]]);
        let ph = law(&records, h);
        let phx = law(&records, |r| concat(&[&h(r), &[r.x1[t], r.x2[t]]]));
        let ph1 = law(&records, h1);
        let ph1x = law(&records, |r| concat(&[&h1(r), &[r.x1[t]]]));
        let ph2 = law(&records, h2);
        let ph2x = law(&records, |r| concat(&[&h2(r), &[r.x2[t]]]));
        let get = |m: &BTreeMap<Vec<usize>, f64>, k: Vec<usize>| m.get(&k).copied().unwrap_or(0.0);

        // representative record per history
        let mut reps: BTreeMap<Vec<usize>, &Record> = BTreeMap::new();
        for r in &records {
            reps.entry(h(r)).or_insert(r);
        }
        for (key, r) in reps {
            let p = ph[&key];
            if p <= 0.0 {
                continue;
            }
            report.histories += 1;
            let (k1, k2) = (h1(r), h2(r));
            let (p1, p2) = (ph1[&k1], ph2[&k2]);
            for x1 in 0..xs1 {
                for x2 in 0..xs2 {
                    let joint = get(&phx, concat(&[&key, &[x1, x2]])) / p;
                    let m1 = get(&ph1x, concat(&[&k1, &[x1]])) / p1;
                    let m2 = get(&ph2x, concat(&[&k2, &[x2]])) / p2;
                    report.max_product_deviation = report.max_product_deviation.max((joint - m1 * m2).abs());
                }
            }
            let e = policy.node(r.nodes[t]).action.as_ref().ok_or(Error::IncompletePolicy { depth: t })?;
            let pred1 = induced_input_marginal(&r.pihat1[t], &e.e1, xs1);
            let pred2 = induced_input_marginal(&r.pihat2[t], &e.e2, xs2);
            for (x1, v) in pred1.iter().enumerate() {
                let m1 = get(&ph1x, concat(&[&k1, &[x1]])) / p1;
                report.max_marginal_deviation = report.max_marginal_deviation.max((m1 - v).abs());
            }
            for (x2, v) in pred2.iter().enumerate() {
                let m2 = get(&ph2x, concat(&[&k2, &[x2]])) / p2;
                report.max_marginal_deviation = report.max_marginal_deviation.max((m2 - v).abs());
            }
        }
    }
    report.max_deviation = report.max_product_deviation.max(report.max_marginal_deviation);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    /// Distinct (policy, history) groups examined.
    pub groups: u64,
    /// Distinct (state, action) pairs seen.
    pub state_actions: u64,
    /// Largest gap between an empirical next-state law and the closed form.
    pub max_closed_form_deviation: f64,
    /// Largest gap between two histories sharing a state and an action.
    pub max_cross_deviation: f64,
    pub max_deviation: f64,
}

type StateKey = (BeliefKey, BeliefKey, BeliefKey);

fn law_distance(a: &BTreeMap<StateKey, f64>, b: &BTreeMap<StateKey, f64>) -> f64 {
    let mut d = 0.0f64;
    for (k, v) in a {
        d = d.max((v - b.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            d = d.max(v.abs());
        }
    }
    d
}

/// For every history (under any of the given policies) the law of the next
/// joint state given the history must depend only on the current joint state
/// and action, and must equal [`joint_kernel_step`].
pub fn check_kernel_independence(spec: &ProblemSpec, policies: &[&PolicyTree], ch: &Channel, cap: f64) -> Result<KernelReport> {
    if policies.is_empty() {
        return Err(Error::invalid("at least one policy is required"));
    }
    let mut report = KernelReport { groups: 0, state_actions: 0, max_closed_form_deviation: 0.0, max_cross_deviation: 0.0, max_deviation: 0.0 };
    let mut first_law: BTreeMap<(StateKey, usize), BTreeMap<StateKey, f64>> = BTreeMap::new();
    let total: f64 = policies.len() as f64 * spec.pair_count() as f64 * (ch.z_size() as f64).powi(policies.iter().map(|p| p.horizon()).max().unwrap() as i32);
    if total > cap {
        return Err(Error::BudgetExceeded { what: "full-history records", count: total, cap });
    }
    for policy in policies {
        let records = enumerate(spec, policy, ch, cap)?;
        for t in 0..policy.horizon() {
            let h = |r: &Record| concat(&[&r.x1[..t], &r.x2[..t], &r.z[..t]]);
            let mut groups: BTreeMap<Vec<usize>, (f64, &Record, BTreeMap<StateKey, f64>)> = BTreeMap::new();
            for r in &records {
                let next: StateKey = (r.pihat1[t + 1].key(), r.pihat2[t + 1].key(), policy.node(r.nodes[t + 1]).belief.key());
                let g = groups.entry(h(r)).or_insert((0.0, r, BTreeMap::new()));
                g.0 += r.p;
                *g.2.entry(next).or_insert(0.0) += r.p;
            }
            for (_, (p, r, joint)) in groups {
                if p <= 0.0 {
                    continue;
                }
                report.groups += 1;
                let empirical: BTreeMap<StateKey, f64> = joint.into_iter().map(|(k, v)| (k, v / p)).collect();
                let node = policy.node(r.nodes[t]);
                let e = node.action.as_ref().ok_or(Error::IncompletePolicy { depth: t })?;
                let state = JointState { pihat1: r.pihat1[t].clone(), pihat2: r.pihat2[t].clone(), pi: node.belief.clone() };
                let closed: BTreeMap<StateKey, f64> =
                    joint_kernel_step(&state, e, ch)?.into_iter().map(|(q, s)| (s.key(), q)).collect();
                report.max_closed_form_deviation = report.max_closed_form_deviation.max(law_distance(&empirical, &closed));
                let slot = (state.key(), e.index(spec));
                match first_law.get(&slot) {
                    Some(seen) => report.max_cross_deviation = report.max_cross_deviation.max(law_distance(seen, &empirical)),
                    None => {
                        report.state_actions += 1;
                        first_law.insert(slot, empirical);
                    }
                }
            }
        }
    }
    report.max_deviation = report.max_closed_form_deviation.max(report.max_cross_deviation);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{evaluate_in, DEFAULT_STATE_CAP};
    use crate::channels;
    use crate::dp::{PolicyContext, PolicyRegistry};
    use crate::objective::ErrorProbability;

    fn policy(spec: &ProblemSpec, ch: &Channel, n: usize, name: &str) -> PolicyTree {
        let ctx = PolicyContext { spec, channel: ch, horizon: n, cost: &ErrorProbability, node_cap: 100_000, action_set: None };
        PolicyRegistry::with_builtins().build(name, &ctx).unwrap()
    }

    fn all_lambda() -> LambdaWeights {
        LambdaWeights::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_channel_is_zero() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let pol = policy(&spec, &ch, 2, "hashed(5)");
        let r = full_history_in(&spec, &pol, &ch, all_lambda(), DEFAULT_HISTORY_CAP).unwrap();
        assert!(r.in_lambda.abs() < 1e-15);
        let f = check_factorization(&spec, &pol, &ch, DEFAULT_HISTORY_CAP).unwrap();
        assert!(f.max_deviation < 1e-15);
    }

    #[test]
    fn identity_channel_matches_stage_evaluation() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let pol = policy(&spec, &ch, 1, "identity");
        let a = full_history_in(&spec, &pol, &ch, all_lambda(), DEFAULT_HISTORY_CAP).unwrap();
        let b = evaluate_in(&spec, &pol, &ch, all_lambda(), DEFAULT_STATE_CAP).unwrap();
        assert!(a.max_difference(&b) < 1e-15);
        assert!((a.in_lambda - 4.0).abs() < 1e-15);
    }

    #[test]
    fn xor_bsc_dp_policy_matches_stage_evaluation() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let pol = policy(&spec, &ch, 3, "dp-optimal");
        let a = full_history_in(&spec, &pol, &ch, all_lambda(), DEFAULT_HISTORY_CAP).unwrap();
        let b = evaluate_in(&spec, &pol, &ch, all_lambda(), DEFAULT_STATE_CAP).unwrap();
        assert!(a.max_difference(&b) < 1e-10, "{a:?}\n{b:?}");
        let f = check_factorization(&spec, &pol, &ch, DEFAULT_HISTORY_CAP).unwrap();
        assert!(f.max_deviation < 1e-12);
    }

    #[test]
    fn chain_rule_matches_message_information() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 3).unwrap();
        let pol = policy(&spec, &ch, 3, "hashed(11)");
        let b = evaluate_in(&spec, &pol, &ch, all_lambda(), DEFAULT_STATE_CAP).unwrap();
        let mi = message_information(&spec, &pol, &ch, DEFAULT_HISTORY_CAP).unwrap();
        assert!((b.i3 - mi / 3.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_law_is_policy_free() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let a = policy(&spec, &ch, 2, "dp-optimal");
        let b = policy(&spec, &ch, 2, "constant(6)");
        let r = check_kernel_independence(&spec, &[&a, &b], &ch, DEFAULT_HISTORY_CAP).unwrap();
        assert!(r.groups > 0);
        assert!(r.max_deviation < 1e-12, "{r:?}");
    }

    #[test]
    fn history_cap_is_enforced() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let pol = policy(&spec, &ch, 3, "identity");
        assert!(matches!(full_history_in(&spec, &pol, &ch, all_lambda(), 10.0), Err(Error::BudgetExceeded { .. })));
    }
}
