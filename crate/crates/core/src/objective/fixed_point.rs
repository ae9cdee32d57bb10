//! Infinite-horizon fixed points of the stage-cost problems on a discretized
//! belief simplex.
//!
//! Discounted: `V(π) = min_e c(π,e) + β Σ_z P(z|π,e) V(F(π,e,z))`.
//! Average: `J + V(π) = min_e c(π,e) + Σ_z P(z|π,e) V(F(π,e,z))`, solved by
//! relative value iteration anchored at the uniform belief.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::TIE_TOLERANCE;
use crate::error::{Error, Result};
use crate::model::{all_joint_actions, belief_update, observation_prob, Channel, JointAction, JointBelief, ProblemSpec, ZERO_OBSERVATION};

use super::CostFunctional;

/// Largest grid the solver will build.
pub const GRID_POINT_CAP: usize = 2_000_000;

/// All beliefs whose entries are multiples of `1/k`, stored as integer
/// compositions of `k` in lexicographic order.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    resolution: u32,
    dims: usize,
    points: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn compositions(remaining: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for v in 0..=remaining {
        prefix.push(v);
        compositions(remaining - v, slots - 1, prefix, out);
        prefix.pop();
    }
}

impl SimplexGrid {
    pub fn new(resolution: u32, dims: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid("grid resolution must be at least 2"));
        }
        if dims < 1 {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        let count = Self::point_count(resolution, dims);
        if count > GRID_POINT_CAP as f64 {
            return Err(Error::BudgetExceeded { what: "grid points", count, cap: GRID_POINT_CAP as f64 });
        }
        let mut points = Vec::with_capacity(count as usize);
        compositions(resolution, dims, &mut Vec::with_capacity(dims), &mut points);
        let index = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ok(SimplexGrid { resolution, dims, points, index })
    }

    /// `C(k + d - 1, d - 1)`.
    pub fn point_count(resolution: u32, dims: usize) -> f64 {
        binomial(resolution as u64 + dims as u64 - 1, dims as u64 - 1)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[u32] {
        &self.points[i]
    }

    pub fn probs(&self, i: usize) -> Vec<f64> {
        self.points[i].iter().map(|&c| c as f64 / self.resolution as f64).collect()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Nearest grid point in L1, ties broken toward the lexicographically
    /// smallest count vector, together with the L1 distance.
    ///
    /// Rounding `k p` down and handing the leftover units to the largest
    /// fractional parts minimizes the L1 distance; among equal fractional
    /// parts the later coordinates are rounded up.
    pub fn project(&self, p: &[f64]) -> (usize, f64) {
        let k = self.resolution as f64;
        let scaled: Vec<f64> = p.iter().map(|v| v.max(0.0) * k).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let floor_sum: u32 = counts.iter().sum();
        let mut leftover = self.resolution.saturating_sub(floor_sum) as usize;
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.total_cmp(&fa).then(b.cmp(&a))
        });
        for &i in &order {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
        // float drift could leave the floors summing above k; trim the smallest fractions
        let mut excess = counts.iter().sum::<u32>().saturating_sub(self.resolution);
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
        let idx = self.index[&counts];
        let err = p.iter().zip(&counts).map(|(v, &c)| (v - c as f64 / k).abs()).sum();
        (idx, err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FixedPointMode {
    Discounted { beta: f64 },
    Average,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointResult {
    pub mode: FixedPointMode,
    pub resolution: u32,
    pub values: Vec<f64>,
    /// Greedy joint action per grid point.
    pub greedy: Vec<JointAction>,
    /// Average cost per stage; `None` in discounted mode.
    pub gain: Option<f64>,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest L1 distance between a continuation belief and its grid point.
    pub max_projection_error: f64,
    pub anchor: usize,
}

struct Transition {
    cost: f64,
    next: Vec<(f64, usize)>,
}

fn transitions(
    spec: &ProblemSpec,
    ch: &Channel,
    cost: &dyn CostFunctional,
    grid: &SimplexGrid,
    actions: &[JointAction],
) -> Result<(Vec<Vec<Transition>>, f64)> {
    let base = spec.log_base;
    let per_point: Vec<(Vec<Transition>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<(Vec<Transition>, f64)> {
            let pi = JointBelief::from_probs(spec.m1, spec.m2, grid.probs(i))?;
            let mut worst = 0.0f64;
            let mut out = Vec::with_capacity(actions.len());
            for e in actions {
                let mut next = Vec::new();
                for z in 0..ch.z_size() {
                    let p = observation_prob(&pi, e, z, ch);
                    if p <= ZERO_OBSERVATION {
                        continue;
                    }
                    let post = belief_update(&pi, e, z, ch)?;
                    let (j, err) = grid.project(post.probs());
                    worst = worst.max(err);
                    next.push((p, j));
                }
                out.push(Transition { cost: cost.stage_cost(&pi, e, ch, base), next });
            }
            Ok((out, worst))
        })
        .collect::<Result<_>>()?;
    let worst = per_point.iter().map(|(_, w)| *w).fold(0.0, f64::max);
    Ok((per_point.into_iter().map(|(t, _)| t).collect(), worst))
}

/// One Bellman sweep into a fresh table: `(min value, argmin action)` per point.
fn sweep(table: &[Vec<Transition>], values: &[f64], weight: f64) -> Vec<(f64, usize)> {
    table
        .par_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, 0);
            for (a, t) in row.iter().enumerate() {
                let v = t.cost + weight * t.next.iter().map(|&(p, j)| p * values[j]).sum::<f64>();
                if v < best.0 - TIE_TOLERANCE {
                    best = (v, a);
                }
            }
            best
        })
        .collect()
}

pub fn fixed_point_solve(
    spec: &ProblemSpec,
    ch: &Channel,
    cost: &dyn CostFunctional,
    mode: FixedPointMode,
    grid: &SimplexGrid,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if !ch.matches(spec) {
        return Err(Error::DimensionMismatch("channel does not match the problem dimensions".into()));
    }
    if !cost.has_stage_form() {
        return Err(Error::invalid(format!("cost `{}` has no stationary stage form", cost.name())));
    }
    if grid.dims != spec.pair_count() {
        return Err(Error::DimensionMismatch(format!("grid has {} coordinates, expected {}", grid.dims, spec.pair_count())));
    }
    if let FixedPointMode::Discounted { beta } = mode {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("discount factor must lie in (0, 1)"));
        }
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("tolerance must be positive and max_iter at least 1"));
    }
    let actions = all_joint_actions(spec);
    let (table, max_projection_error) = transitions(spec, ch, cost, grid, &actions)?;
    let uniform = grid.project(JointBelief::uniform(spec.m1, spec.m2).probs()).0;

    let weight = match mode {
        FixedPointMode::Discounted { beta } => beta,
        FixedPointMode::Average => 1.0,
    };
    let mut values = vec![0.0; grid.len()];
    let mut greedy = vec![0; grid.len()];
    let mut gain = None;
    let mut residual = f64::INFINITY;
    let mut residual_history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let swept = sweep(&table, &values, weight);
        let mut next: Vec<f64> = swept.iter().map(|&(v, _)| v).collect();
        if mode == FixedPointMode::Average {
            let j = next[uniform];
            next.iter_mut().for_each(|v| *v -= j);
            gain = Some(j);
        }
        residual = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        residual_history.push(residual);
        values = next;
        greedy = swept.into_iter().map(|(_, a)| a).collect();
        if residual < tol {
            break;
        }
    }
    let converged = residual < tol;
    if !converged {
        log::warn!("fixed point did not converge in {max_iter} iterations (residual {residual:e})");
    }
    Ok(FixedPointResult {
        mode,
        resolution: grid.resolution,
        values,
        greedy: greedy.into_iter().map(|a| actions[a].clone()).collect(),
        gain,
        residual,
        residual_history,
        iterations,
        converged,
        max_projection_error,
        anchor: uniform,
    })
}
