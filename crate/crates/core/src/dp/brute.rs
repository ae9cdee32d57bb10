//! Exhaustive search over unstructured deterministic encoders
//! `xⁱ_t = fⁱ_t(wⁱ, z_{1:t-1})` with ML decoding. Ground truth for the
//! structured dynamic program at tiny sizes.

use rayon::prelude::*;
use serde::Serialize;

use super::TIE_TOLERANCE;
use crate::error::{Error, Result};
use crate::model::{Channel, EncoderFunction, ProblemSpec, User};

pub const DEFAULT_STRATEGY_CAP: f64 = 1e7;

/// Indexing of one user's unstructured strategies. A strategy assigns an
/// encoder function to every slot `(t, z_{1:t-1})`; slots are ordered by `t`
/// and then by the history read as a base-|Z| numeral, and the strategy
/// index is the slot sequence read as a numeral with the first slot most
/// significant.
#[derive(Debug, Clone)]
pub(crate) struct StrategySpace {
    pub horizon: usize,
    pub z_size: usize,
    pub m: usize,
    pub x_size: usize,
    pub encoders: usize,
    /// First slot of time `t` (zero based).
    pub slot_offset: Vec<usize>,
    pub slots: usize,
}

impl StrategySpace {
    pub fn new(spec: &ProblemSpec, user: User, horizon: usize) -> Self {
        let m = spec.message_count(user);
        let x_size = spec.input_size(user);
        let mut slot_offset = Vec::with_capacity(horizon);
        let mut slots = 0;
        for t in 0..horizon {
            slot_offset.push(slots);
            slots += spec.z_size.pow(t as u32);
        }
        StrategySpace { horizon, z_size: spec.z_size, m, x_size, encoders: x_size.pow(m as u32), slot_offset, slots }
    }

    pub fn log_count(&self) -> f64 {
        self.slots as f64 * (self.encoders as f64).ln()
    }

    pub fn count(&self) -> usize {
        self.encoders.pow(self.slots as u32)
    }

    /// Encoder-function index per slot.
    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut digits = vec![0; self.slots];
        for d in digits.iter_mut().rev() {
            *d = idx % self.encoders;
            idx /= self.encoders;
        }
        digits
    }

    /// Input table `x[slot * m + w]` for a strategy.
    pub fn inputs(&self, idx: usize) -> Vec<usize> {
        let mut x = Vec::with_capacity(self.slots * self.m);
        for enc in self.decode(idx) {
            let f = EncoderFunction::from_index(User::One, enc, self.m, self.x_size);
            x.extend((0..self.m).map(|w| f.apply(w)));
        }
        x
    }

    /// Slot used at time `t` after the history whose numeral is `hist`.
    #[inline]
    pub fn slot(&self, t: usize, hist: usize) -> usize {
        self.slot_offset[t] + hist
    }
}

/// Total joint strategy count (as a float, it overflows integers quickly).
pub fn strategy_count(spec: &ProblemSpec, horizon: usize) -> f64 {
    let a = StrategySpace::new(spec, User::One, horizon);
    let b = StrategySpace::new(spec, User::Two, horizon);
    (a.log_count() + b.log_count()).exp()
}

pub(crate) fn check_budget(spec: &ProblemSpec, horizon: usize, cap: f64) -> Result<(StrategySpace, StrategySpace)> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let count = strategy_count(spec, horizon);
    if !(count <= cap) {
        return Err(Error::BudgetExceeded { what: "unstructured strategies", count, cap });
    }
    Ok((StrategySpace::new(spec, User::One, horizon), StrategySpace::new(spec, User::Two, horizon)))
}

/// Per user, per time, per output history: the encoder's value sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstructuredStrategy {
    pub user1: Vec<Vec<Vec<usize>>>,
    pub user2: Vec<Vec<Vec<usize>>>,
}

fn describe(space: &StrategySpace, idx: usize) -> Vec<Vec<Vec<usize>>> {
    let digits = space.decode(idx);
    (0..space.horizon)
        .map(|t| {
            (0..space.z_size.pow(t as u32))
                .map(|h| EncoderFunction::from_index(User::One, digits[space.slot(t, h)], space.m, space.x_size).values().to_vec())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub pe: f64,
    pub strategies_examined: f64,
    pub witness: UnstructuredStrategy,
}

/// `Pe = Σ_z [Σ_w P(w, z) - max_w P(w, z)]` for one joint strategy.
fn error_probability(spec: &ProblemSpec, ch: &Channel, s1: &StrategySpace, x1: &[usize], s2: &StrategySpace, x2: &[usize]) -> f64 {
    let n = s1.horizon;
    let zs = spec.z_size;
    let prior = 1.0 / spec.pair_count() as f64;
    let mut pe = 0.0;
    for zseq in 0..zs.pow(n as u32) {
        // z_1 is the most significant digit
        let mut z = vec![0; n];
        let mut rest = zseq;
        for slot in z.iter_mut().rev() {
            *slot = rest % zs;
            rest /= zs;
        }
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for w1 in 0..spec.m1 {
            for w2 in 0..spec.m2 {
                let mut p = prior;
                let mut hist = 0;
                for (t, &zt) in z.iter().enumerate() {
                    let a = x1[s1.slot(t, hist) * s1.m + w1];
                    let b = x2[s2.slot(t, hist) * s2.m + w2];
                    p *= ch.prob(a, b, zt);
                    hist = hist * zs + zt;
                }
                sum += p;
                max = max.max(p);
            }
        }
        pe += sum - max;
    }
    pe
}

pub fn brute_force_unstructured(spec: &ProblemSpec, ch: &Channel, horizon: usize, cap: f64) -> Result<BruteForceResult> {
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    let (s1, s2) = check_budget(spec, horizon, cap)?;
    let tables2: Vec<Vec<usize>> = (0..s2.count()).map(|i| s2.inputs(i)).collect();

    let per_first: Vec<(usize, f64)> = (0..s1.count())
        .into_par_iter()
        .map(|i| {
            let x1 = s1.inputs(i);
            let mut best = (0, f64::INFINITY);
            for (j, x2) in tables2.iter().enumerate() {
                let pe = error_probability(spec, ch, &s1, &x1, &s2, x2);
                if pe < best.1 - TIE_TOLERANCE {
                    best = (j, pe);
                }
            }
            best
        })
        .collect();

    let mut best = (0, 0, f64::INFINITY);
    for (i, &(j, pe)) in per_first.iter().enumerate() {
        if pe < best.2 - TIE_TOLERANCE {
            best = (i, j, pe);
        }
    }
    Ok(BruteForceResult {
        pe: best.2,
        strategies_examined: (s1.count() * s2.count()) as f64,
        witness: UnstructuredStrategy { user1: describe(&s1, best.0), user2: describe(&s2, best.1) },
    })
}
