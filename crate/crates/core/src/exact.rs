//! Exact rational arithmetic versions of the small oracles. Channel entries
//! are converted from their binary floating-point values exactly and each
//! row is renormalized, so every comparison below is free of rounding.

use std::collections::{HashMap, HashSet};

use num::{BigRational, One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::dp::strategy_count;
use crate::error::{Error, Result};
use crate::model::{all_joint_actions, Channel, JointAction, ProblemSpec, User};

/// Channel rows as exact rationals.
#[derive(Debug, Clone)]
pub struct ExactChannel {
    x2_size: usize,
    z_size: usize,
    q: Vec<BigRational>,
}

impl ExactChannel {
    pub fn from_channel(ch: &Channel) -> Result<Self> {
        let mut q = Vec::with_capacity(ch.x1_size() * ch.x2_size() * ch.z_size());
        for x1 in 0..ch.x1_size() {
            for x2 in 0..ch.x2_size() {
                let row: Vec<BigRational> = ch
                    .row(x1, x2)
                    .iter()
                    .map(|&v| BigRational::from_float(v).ok_or_else(|| Error::invalid("channel entry is not finite")))
                    .collect::<Result<_>>()?;
                let sum: BigRational = row.iter().sum();
                q.extend(row.into_iter().map(|v| v / &sum));
            }
        }
        Ok(ExactChannel { x2_size: ch.x2_size(), z_size: ch.z_size(), q })
    }

    pub fn prob(&self, x1: usize, x2: usize, z: usize) -> &BigRational {
        &self.q[(x1 * self.x2_size + x2) * self.z_size + z]
    }
}

pub fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn likelihood<'a>(ch: &'a ExactChannel, e: &JointAction, w1: usize, w2: usize, z: usize) -> &'a BigRational {
    ch.prob(e.e1.apply(w1), e.e2.apply(w2), z)
}

/// Exact posterior `F(π, e, z)`, or `None` for a zero-probability output.
fn update(spec: &ProblemSpec, ch: &ExactChannel, pi: &[BigRational], e: &JointAction, z: usize) -> Option<(BigRational, Vec<BigRational>)> {
    let mut p = Vec::with_capacity(pi.len());
    for w1 in 0..spec.m1 {
        for w2 in 0..spec.m2 {
            p.push(likelihood(ch, e, w1, w2, z) * &pi[w1 * spec.m2 + w2]);
        }
    }
    let norm: BigRational = p.iter().sum();
    if norm.is_zero() {
        return None;
    }
    for v in p.iter_mut() {
        *v /= &norm;
    }
    Some((norm, p))
}

fn uniform(spec: &ProblemSpec) -> Vec<BigRational> {
    let n = spec.pair_count();
    vec![BigRational::new(1.into(), (n as i64).into()); n]
}

fn terminal(pi: &[BigRational]) -> BigRational {
    BigRational::one() - pi.iter().max().cloned().unwrap_or_else(BigRational::zero)
}

fn value(
    spec: &ProblemSpec,
    ch: &ExactChannel,
    actions: &[JointAction],
    pi: Vec<BigRational>,
    remaining: usize,
    memo: &mut HashMap<(usize, Vec<BigRational>), BigRational>,
) -> BigRational {
    if remaining == 0 {
        return terminal(&pi);
    }
    if let Some(v) = memo.get(&(remaining, pi.clone())) {
        return v.clone();
    }
    let mut best: Option<BigRational> = None;
    for e in actions {
        let mut v = BigRational::zero();
        for z in 0..ch.z_size {
            if let Some((pz, next)) = update(spec, ch, &pi, e, z) {
                v += pz * value(spec, ch, actions, next, remaining - 1, memo);
            }
        }
        if best.as_ref().map_or(true, |b| v < *b) {
            best = Some(v);
        }
    }
    let best = best.unwrap_or_else(|| terminal(&pi));
    memo.insert((remaining, pi), best.clone());
    best
}

/// Optimal structured error probability by exact backward recursion.
pub fn exact_dp_value(spec: &ProblemSpec, ch: &Channel, horizon: usize) -> Result<BigRational> {
    spec.validate()?;
    let exact = ExactChannel::from_channel(ch)?;
    let actions = all_joint_actions(spec);
    Ok(value(spec, &exact, &actions, uniform(spec), horizon, &mut HashMap::new()))
}

/// Distinct exact beliefs per depth reachable under any action sequence.
pub fn exact_reachable_counts(spec: &ProblemSpec, ch: &Channel, horizon: usize) -> Result<Vec<usize>> {
    spec.validate()?;
    let exact = ExactChannel::from_channel(ch)?;
    let actions = all_joint_actions(spec);
    let mut layer = vec![uniform(spec)];
    let mut counts = vec![1];
    for _ in 0..horizon {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for pi in &layer {
            for e in &actions {
                for z in 0..exact.z_size {
                    if let Some((_, post)) = update(spec, &exact, pi, e, z) {
                        if seen.insert(post.clone()) {
                            next.push(post);
                        }
                    }
                }
            }
        }
        counts.push(next.len());
        layer = next;
    }
    Ok(counts)
}

/// Exact minimum error probability over unstructured deterministic
/// strategies `xⁱ_t = fⁱ_t(wⁱ, z_{1:t-1})`, written as
/// `1 - Σ_z max_w P(w, z)`.
pub fn exact_brute_force(spec: &ProblemSpec, ch: &Channel, horizon: usize, cap: f64) -> Result<BigRational> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let count = strategy_count(spec, horizon);
    if !(count <= cap) {
        return Err(Error::BudgetExceeded { what: "unstructured strategies", count, cap });
    }
    let exact = ExactChannel::from_channel(ch)?;
    let tables1 = strategy_tables(spec, User::One, horizon);
    let tables2 = strategy_tables(spec, User::Two, horizon);
    let zs = spec.z_size;
    let sequences: Vec<Vec<usize>> = (0..zs.pow(horizon as u32))
        .map(|mut idx| {
            let mut z = vec![0; horizon];
            for slot in z.iter_mut().rev() {
                *slot = idx % zs;
                idx /= zs;
            }
            z
        })
        .collect();
    let prior = BigRational::new(1.into(), (spec.pair_count() as i64).into());

    let best_correct = tables1
        .par_iter()
        .map(|x1| {
            let mut best = BigRational::zero();
            for x2 in &tables2 {
                let mut correct = BigRational::zero();
                for z in &sequences {
                    let mut max = BigRational::zero();
                    for w1 in 0..spec.m1 {
                        for w2 in 0..spec.m2 {
                            let mut p = BigRational::one();
                            let mut hist = 0;
                            for (t, &zt) in z.iter().enumerate() {
                                let slot = slot_index(zs, t, hist);
                                p *= exact.prob(x1[slot][w1], x2[slot][w2], zt);
                                if p.is_zero() {
                                    break;
                                }
                                hist = hist * zs + zt;
                            }
                            if p > max {
                                max = p;
                            }
                        }
                    }
                    correct += max;
                }
                if correct > best {
                    best = correct;
                }
            }
            best
        })
        .reduce(BigRational::zero, |a, b| if a >= b { a } else { b });
    Ok(BigRational::one() - prior * best_correct)
}

fn slot_index(zs: usize, t: usize, hist: usize) -> usize {
    (0..t).map(|s| zs.pow(s as u32)).sum::<usize>() + hist
}

/// Every strategy of one user as a table `[slot][w] -> x`.
fn strategy_tables(spec: &ProblemSpec, user: User, horizon: usize) -> Vec<Vec<Vec<usize>>> {
    let m = spec.message_count(user);
    let x = spec.input_size(user);
    let slots: usize = (0..horizon).map(|t| spec.z_size.pow(t as u32)).sum();
    let encoders = x.pow(m as u32);
    let count = encoders.pow(slots as u32);
    (0..count)
        .map(|mut idx| {
            let mut table = vec![Vec::new(); slots];
            for slot in table.iter_mut().rev() {
                let mut enc = idx % encoders;
                idx /= encoders;
                let mut values = vec![0; m];
                for v in values.iter_mut().rev() {
                    *v = enc % x;
                    enc /= x;
                }
                *slot = values;
            }
            table
        })
        .collect()
}
