use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{all_joint_actions, belief_update, observation_prob, Channel, JointAction, JointBelief, ProblemSpec, ZERO_OBSERVATION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub histories: u64,
    pub max_deviation: f64,
}

/// Posterior from scratch: `π(w) ∝ Π_τ Q(z_τ | e_τ(w))` under the uniform prior.
fn direct_posterior(spec: &ProblemSpec, ch: &Channel, history: &[(usize, usize)], actions: &[JointAction]) -> Vec<f64> {
    let mut p = vec![0.0; spec.pair_count()];
    for w1 in 0..spec.m1 {
        for w2 in 0..spec.m2 {
            p[w1 * spec.m2 + w2] = history.iter().map(|&(a, z)| actions[a].likelihood(ch, w1, w2, z)).product();
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

fn walk(
    spec: &ProblemSpec,
    ch: &Channel,
    actions: &[JointAction],
    belief: &JointBelief,
    history: &mut Vec<(usize, usize)>,
    remaining: usize,
    report: &mut IndependenceReport,
) {
    if !history.is_empty() {
        let direct = direct_posterior(spec, ch, history, actions);
        let dev = belief.probs().iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.max_deviation = report.max_deviation.max(dev);
        report.histories += 1;
    }
    if remaining == 0 {
        return;
    }
    for (a, action) in actions.iter().enumerate() {
        for z in 0..ch.z_size() {
            if observation_prob(belief, action, z, ch) <= ZERO_OBSERVATION {
                continue;
            }
            let Ok(next) = belief_update(belief, action, z, ch) else { continue };
            history.push((a, z));
            walk(spec, ch, actions, &next, history, remaining - 1, report);
            history.pop();
        }
    }
}

/// Compares the recursive posterior `F(…F(π₀, e₁, z₁)…, e_t, z_t)` with the
/// directly computed Bayes posterior for every positive-probability history
/// of actions and outputs up to `horizon`. Any two policies realizing the
/// same history therefore see the same belief.
pub fn check_policy_independence(
    spec: &ProblemSpec,
    ch: &Channel,
    horizon: usize,
    action_set: Option<&[JointAction]>,
    history_cap: f64,
) -> Result<IndependenceReport> {
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    let actions = action_set.map(<[_]>::to_vec).unwrap_or_else(|| all_joint_actions(spec));
    let count = ((actions.len() * ch.z_size()) as f64).powi(horizon as i32);
    if count > history_cap {
        return Err(Error::BudgetExceeded { what: "action/output histories", count, cap: history_cap });
    }
    let root = JointBelief::uniform(spec.m1, spec.m2);
    if horizon == 0 {
        return Ok(IndependenceReport { histories: 0, max_deviation: 0.0 });
    }
    // split on the first step so subtrees run in parallel
    let firsts: Vec<(usize, usize)> = (0..actions.len()).flat_map(|a| (0..ch.z_size()).map(move |z| (a, z))).collect();
    let reports: Vec<IndependenceReport> = firsts
        .par_iter()
        .map(|&(a, z)| {
            let mut report = IndependenceReport { histories: 0, max_deviation: 0.0 };
            if observation_prob(&root, &actions[a], z, ch) <= ZERO_OBSERVATION {
                return report;
            }
            if let Ok(next) = belief_update(&root, &actions[a], z, ch) {
                let mut history = vec![(a, z)];
                walk(spec, ch, &actions, &next, &mut history, horizon - 1, &mut report);
            }
            report
        })
        .collect();
    Ok(reports.into_iter().fold(IndependenceReport { histories: 0, max_deviation: 0.0 }, |acc, r| IndependenceReport {
        histories: acc.histories + r.histories,
        max_deviation: acc.max_deviation.max(r.max_deviation),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;

    #[test]
    fn recursive_posterior_matches_direct_bayes() {
        let spec = ProblemSpec::binary();
        let ch = channels::random(&spec, 4).unwrap();
        let r = check_policy_independence(&spec, &ch, 2, None, 1e7).unwrap();
        assert_eq!(r.histories, 32 + 32 * 32);
        assert!(r.max_deviation < 1e-12);
    }

    #[test]
    fn zero_probability_histories_are_skipped() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let r = check_policy_independence(&spec, &ch, 2, None, 1e7).unwrap();
        assert!(r.max_deviation < 1e-12);
        assert!(r.histories < 64 + 64 * 64);
    }
}
