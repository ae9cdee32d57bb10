//! Problem dimensions, the MAC, beliefs, encoder functions and the two Bayes
//! recursions (receiver-side joint belief and transmitter-side private belief).
//!
//! All indices are zero based: messages `w ∈ 0..M`, input symbols
//! `x ∈ 0..|X|`, outputs `z ∈ 0..|Z|`. Joint beliefs are stored row-major in
//! `(w1, w2)`.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::info::LogBase;

/// Tolerance accepted on channel row sums at validation time.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Entries below this are snapped to zero in canonical beliefs.
pub const SNAP_THRESHOLD: f64 = 1e-15;
/// Canonical keys keep this many decimal digits.
const KEY_SCALE: f64 = 1e12;
/// Observation probabilities at or below this are treated as impossible.
pub const ZERO_OBSERVATION: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub x1_size: usize,
    pub x2_size: usize,
    pub z_size: usize,
    pub m1: usize,
    pub m2: usize,
    #[serde(default)]
    pub log_base: LogBase,
}

impl ProblemSpec {
    pub fn new(x1_size: usize, x2_size: usize, z_size: usize, m1: usize, m2: usize) -> Result<Self> {
        let spec = ProblemSpec { x1_size, x2_size, z_size, m1, m2, log_base: LogBase::Bits };
        spec.validate()?;
        Ok(spec)
    }

    /// Binary inputs and output, two messages per user.
    pub fn binary() -> Self {
        ProblemSpec { x1_size: 2, x2_size: 2, z_size: 2, m1: 2, m2: 2, log_base: LogBase::Bits }
    }

    pub fn with_log_base(mut self, base: LogBase) -> Self {
        self.log_base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.x1_size == 0 || self.x2_size == 0 || self.z_size == 0 || self.m1 == 0 || self.m2 == 0 {
            return Err(Error::invalid("all alphabet sizes and message counts must be at least 1"));
        }
        if self.m1 * self.m2 < 2 {
            return Err(Error::invalid("m1 * m2 must be at least 2"));
        }
        Ok(())
    }

    pub fn pair_count(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn input_size(&self, user: User) -> usize {
        match user {
            User::One => self.x1_size,
            User::Two => self.x2_size,
        }
    }

    pub fn message_count(&self, user: User) -> usize {
        match user {
            User::One => self.m1,
            User::Two => self.m2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum User {
    One,
    Two,
}

impl User {
    pub fn other(self) -> User {
        match self {
            User::One => User::Two,
            User::Two => User::One,
        }
    }
}

/// Row-stochastic table `Q(z | x1, x2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    x1_size: usize,
    x2_size: usize,
    z_size: usize,
    q: Vec<f64>,
}

impl Channel {
    #[inline]
    pub fn prob(&self, x1: usize, x2: usize, z: usize) -> f64 {
        self.q[(x1 * self.x2_size + x2) * self.z_size + z]
    }

    #[inline]
    pub fn row(&self, x1: usize, x2: usize) -> &[f64] {
        let start = (x1 * self.x2_size + x2) * self.z_size;
        &self.q[start..start + self.z_size]
    }

    pub fn x1_size(&self) -> usize {
        self.x1_size
    }

    pub fn x2_size(&self) -> usize {
        self.x2_size
    }

    pub fn z_size(&self) -> usize {
        self.z_size
    }

    /// Rows in `(x1, x2)` row-major order.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.z_size).map(<[f64]>::to_vec).collect()
    }

    /// Relabels outputs: new output `perm[z]` carries the mass of old `z`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Channel> {
        let mut seen = vec![false; self.z_size];
        if perm.len() != self.z_size || perm.iter().any(|&p| p >= self.z_size || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("output permutation is not a permutation of 0..|Z|"));
        }
        let mut q = vec![0.0; self.q.len()];
        for (r, row) in self.q.chunks(self.z_size).enumerate() {
            for (z, &v) in row.iter().enumerate() {
                q[r * self.z_size + perm[z]] = v;
            }
        }
        Ok(Channel { q, ..*self })
    }

    pub fn matches(&self, spec: &ProblemSpec) -> bool {
        self.x1_size == spec.x1_size && self.x2_size == spec.x2_size && self.z_size == spec.z_size
    }
}

/// Checks a raw `(x1, x2)`-row-major table against `spec` and returns a
/// channel whose rows are renormalized to sum to one.
pub fn validate_channel(spec: &ProblemSpec, rows: &[Vec<f64>]) -> Result<Channel> {
    let expected = spec.x1_size * spec.x2_size;
    if rows.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "expected {expected} rows (|X1|*|X2|), found {}",
            rows.len()
        )));
    }
    let mut q = Vec::with_capacity(expected * spec.z_size);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != spec.z_size {
            return Err(Error::DimensionMismatch(format!(
                "row {r} has {} entries, expected |Z| = {}",
                row.len(),
                spec.z_size
            )));
        }
        for (z, &v) in row.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::NegativeEntry { row: r, z, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::NotStochastic { row: r, sum });
        }
        q.extend(row.iter().map(|v| v / sum));
    }
    Ok(Channel { x1_size: spec.x1_size, x2_size: spec.x2_size, z_size: spec.z_size, q })
}

/// Memo-table key of a belief: canonical entries rounded to twelve decimals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefKey(Vec<i64>);

impl BeliefKey {
    /// Largest per-entry difference, in units of the key resolution.
    pub fn distance(&self, other: &BeliefKey) -> i64 {
        if self.0.len() != other.0.len() {
            return i64::MAX;
        }
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }
}

impl Serialize for JointBelief {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.p)
    }
}

impl Serialize for PrivateBelief {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.p)
    }
}

impl Serialize for EncoderFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.map)
    }
}

fn key_of(p: &[f64]) -> BeliefKey {
    BeliefKey(p.iter().map(|&v| (v * KEY_SCALE).round() as i64).collect())
}

fn snap_and_normalize(p: &mut [f64]) {
    for v in p.iter_mut() {
        if *v < SNAP_THRESHOLD {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("belief entries must be finite and non-negative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("belief sums to {s}, not 1")));
    }
    Ok(())
}

/// Receiver-side posterior `π(w1, w2)` over message pairs. Serializes as
/// its row-major probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBelief {
    m1: usize,
    m2: usize,
    p: Vec<f64>,
}

impl JointBelief {
    pub fn uniform(m1: usize, m2: usize) -> Self {
        let n = m1 * m2;
        JointBelief { m1, m2, p: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(m1: usize, m2: usize, w1: usize, w2: usize) -> Self {
        let mut p = vec![0.0; m1 * m2];
        p[w1 * m2 + w2] = 1.0;
        JointBelief { m1, m2, p }
    }

    /// Builds a belief from row-major entries, returning its canonical form.
    pub fn from_probs(m1: usize, m2: usize, mut p: Vec<f64>) -> Result<Self> {
        if p.len() != m1 * m2 {
            return Err(Error::DimensionMismatch(format!("belief has {} entries, expected {}", p.len(), m1 * m2)));
        }
        check_distribution(&p)?;
        snap_and_normalize(&mut p);
        Ok(JointBelief { m1, m2, p })
    }

    #[inline]
    pub fn get(&self, w1: usize, w2: usize) -> f64 {
        self.p[w1 * self.m2 + w2]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn key(&self) -> BeliefKey {
        key_of(&self.p)
    }

    /// Marginal over the given user's message.
    pub fn marginal(&self, user: User) -> Vec<f64> {
        match user {
            User::One => (0..self.m1).map(|w1| (0..self.m2).map(|w2| self.get(w1, w2)).sum()).collect(),
            User::Two => (0..self.m2).map(|w2| (0..self.m1).map(|w1| self.get(w1, w2)).sum()).collect(),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.p.iter().any(|&v| v >= 1.0 - 1e-12)
    }

    pub fn max_prob(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }
}

/// A transmitter's belief `π̂ⁱ` over its own message. Serializes as its
/// probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateBelief {
    user: User,
    p: Vec<f64>,
}

impl PrivateBelief {
    pub fn uniform(user: User, m: usize) -> Self {
        PrivateBelief { user, p: vec![1.0 / m as f64; m] }
    }

    pub fn from_probs(user: User, mut p: Vec<f64>) -> Result<Self> {
        check_distribution(&p)?;
        snap_and_normalize(&mut p);
        Ok(PrivateBelief { user, p })
    }

    pub fn user(&self) -> User {
        self.user
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn key(&self) -> BeliefKey {
        key_of(&self.p)
    }
}

/// Partial encoding function `eⁱ : Wⁱ → Xⁱ`. Serializes as its value
/// sequence `[eⁱ(0), eⁱ(1), …]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncoderFunction {
    user: User,
    map: Vec<usize>,
}

impl EncoderFunction {
    pub fn new(user: User, map: Vec<usize>, x_size: usize) -> Result<Self> {
        if let Some(&bad) = map.iter().find(|&&x| x >= x_size) {
            return Err(Error::invalid(format!("encoder value {bad} is not a symbol of an alphabet of size {x_size}")));
        }
        Ok(EncoderFunction { user, map })
    }

    /// Every encoder for `user` in enumeration order: value sequences read as
    /// base-|X| numerals, first message most significant.
    pub fn all(user: User, m: usize, x_size: usize) -> Vec<EncoderFunction> {
        let count = x_size.pow(m as u32);
        (0..count).map(|idx| EncoderFunction::from_index(user, idx, m, x_size)).collect()
    }

    pub fn from_index(user: User, mut idx: usize, m: usize, x_size: usize) -> Self {
        let mut map = vec![0; m];
        for slot in map.iter_mut().rev() {
            *slot = idx % x_size;
            idx /= x_size;
        }
        EncoderFunction { user, map }
    }

    pub fn index(&self, x_size: usize) -> usize {
        self.map.iter().fold(0, |acc, &x| acc * x_size + x)
    }

    #[inline]
    pub fn apply(&self, w: usize) -> usize {
        self.map[w]
    }

    pub fn user(&self) -> User {
        self.user
    }

    pub fn values(&self) -> &[usize] {
        &self.map
    }

    pub fn is_injective(&self) -> bool {
        let mut v = self.map.clone();
        v.sort_unstable();
        v.windows(2).all(|w| w[0] != w[1])
    }
}

/// The common agent's action: one encoder function per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct JointAction {
    pub e1: EncoderFunction,
    pub e2: EncoderFunction,
}

impl JointAction {
    pub fn new(e1: EncoderFunction, e2: EncoderFunction) -> Result<Self> {
        if e1.user != User::One || e2.user != User::Two {
            return Err(Error::invalid("joint action user tags do not match positions"));
        }
        Ok(JointAction { e1, e2 })
    }

    /// Builds an action from raw value sequences, checked against `spec`.
    pub fn from_values(spec: &ProblemSpec, v1: Vec<usize>, v2: Vec<usize>) -> Result<Self> {
        if v1.len() != spec.m1 || v2.len() != spec.m2 {
            return Err(Error::DimensionMismatch("encoder length must equal the message count".into()));
        }
        Ok(JointAction {
            e1: EncoderFunction::new(User::One, v1, spec.x1_size)?,
            e2: EncoderFunction::new(User::Two, v2, spec.x2_size)?,
        })
    }

    /// Row-major `(e1, e2)` index in the enumeration of all joint actions.
    pub fn index(&self, spec: &ProblemSpec) -> usize {
        let n2 = spec.x2_size.pow(spec.m2 as u32);
        self.e1.index(spec.x1_size) * n2 + self.e2.index(spec.x2_size)
    }

    pub fn from_index(spec: &ProblemSpec, idx: usize) -> Self {
        let n2 = spec.x2_size.pow(spec.m2 as u32);
        JointAction {
            e1: EncoderFunction::from_index(User::One, idx / n2, spec.m1, spec.x1_size),
            e2: EncoderFunction::from_index(User::Two, idx % n2, spec.m2, spec.x2_size),
        }
    }

    pub fn encoder(&self, user: User) -> &EncoderFunction {
        match user {
            User::One => &self.e1,
            User::Two => &self.e2,
        }
    }

    /// `Q(z | e1(w1), e2(w2))`.
    #[inline]
    pub fn likelihood(&self, ch: &Channel, w1: usize, w2: usize, z: usize) -> f64 {
        ch.prob(self.e1.apply(w1), self.e2.apply(w2), z)
    }
}

/// Number of joint actions for `spec`, or `None` on overflow.
pub fn joint_action_count(spec: &ProblemSpec) -> Option<usize> {
    let n1 = spec.x1_size.checked_pow(spec.m1 as u32)?;
    let n2 = spec.x2_size.checked_pow(spec.m2 as u32)?;
    n1.checked_mul(n2)
}

/// All joint actions in row-major `(e1, e2)` order.
pub fn all_joint_actions(spec: &ProblemSpec) -> Vec<JointAction> {
    let e1s = EncoderFunction::all(User::One, spec.m1, spec.x1_size);
    let e2s = EncoderFunction::all(User::Two, spec.m2, spec.x2_size);
    let mut out = Vec::with_capacity(e1s.len() * e2s.len());
    for e1 in &e1s {
        for e2 in &e2s {
            out.push(JointAction { e1: e1.clone(), e2: e2.clone() });
        }
    }
    out
}

/// `P(z | π, e) = Σ Q(z | e1(w1), e2(w2)) π(w1, w2)`.
pub fn observation_prob(pi: &JointBelief, e: &JointAction, z: usize, ch: &Channel) -> f64 {
    let mut s = 0.0;
    for w1 in 0..pi.m1 {
        for w2 in 0..pi.m2 {
            let p = pi.get(w1, w2);
            if p > 0.0 {
                s += e.likelihood(ch, w1, w2, z) * p;
            }
        }
    }
    s
}

/// The policy-independent update `F(π, e, z)`.
pub fn belief_update(pi: &JointBelief, e: &JointAction, z: usize, ch: &Channel) -> Result<JointBelief> {
    if z >= ch.z_size {
        return Err(Error::invalid(format!("output symbol {z} out of range")));
    }
    let mut p = Vec::with_capacity(pi.p.len());
    for w1 in 0..pi.m1 {
        for w2 in 0..pi.m2 {
            p.push(e.likelihood(ch, w1, w2, z) * pi.get(w1, w2));
        }
    }
    let denom: f64 = p.iter().sum();
    if denom <= ZERO_OBSERVATION {
        return Err(Error::ZeroProbabilityObservation { z, prob: denom });
    }
    for v in p.iter_mut() {
        *v /= denom;
    }
    snap_and_normalize(&mut p);
    Ok(JointBelief { m1: pi.m1, m2: pi.m2, p })
}

/// The private update `F̂ⁱ(π̂, eⁱ, xⁱ)`: restrict to the preimage of `x` and
/// renormalize.
pub fn private_belief_update(pihat: &PrivateBelief, e: &EncoderFunction, x: usize) -> Result<PrivateBelief> {
    let mut p: Vec<f64> = pihat.p.iter().enumerate().map(|(w, &v)| if e.apply(w) == x { v } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        return Err(Error::ZeroProbabilityInput { x });
    }
    for v in p.iter_mut() {
        *v /= s;
    }
    snap_and_normalize(&mut p);
    Ok(PrivateBelief { user: pihat.user, p })
}

/// `P(xⁱ) = Σ_w 1{eⁱ(w) = xⁱ} π̂ⁱ(w)` over an alphabet of size `x_size`.
pub fn induced_input_marginal(pihat: &PrivateBelief, e: &EncoderFunction, x_size: usize) -> Vec<f64> {
    let mut out = vec![0.0; x_size];
    for (w, &v) in pihat.p.iter().enumerate() {
        out[e.apply(w)] += v;
    }
    out
}

/// Maximum-likelihood (MAP under the uniform prior) decision; ties go to
/// the lexicographically smallest pair.
pub fn ml_decode(pi: &JointBelief) -> (usize, usize) {
    let mut best = 0;
    for (i, &v) in pi.p.iter().enumerate() {
        if v > pi.p[best] {
            best = i;
        }
    }
    (best / pi.m2, best % pi.m2)
}

/// Terminal cost `1 - max π`.
pub fn terminal_cost(pi: &JointBelief) -> f64 {
    (1.0 - pi.max_prob()).max(0.0)
}
