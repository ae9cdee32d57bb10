//! Objectives for the common agent's problem. Besides the error probability
//! (terminal only), three terminal functionals of `Πₙ` telescope into
//! time-invariant stage costs `c(π, e)`:
//!
//! | kind | terminal quantity | stage cost |
//! |---|---|---|
//! | `joint_entropy_drift` | `E[-log Πₙ(W¹,W²)]` | `-I(W¹,W²; Z_t \| Z^{t-1})` |
//! | `conditional_entropy_drift_user1` | `E[-log Πₙ(W¹\|W²)]` | `-I(W¹; Z_t \| W², Z^{t-1})` |
//! | `ejs` | `E[-log Πₙ(W)/(1-Πₙ(W))]` | `-EJS(π, {Q(·\|e(w))})` |

use std::collections::BTreeMap;

use crate::descriptor::parse_descriptor;
use crate::error::{Error, Result};
use crate::info::{kl_divergence, LogBase, KL_SATURATION, PROB_FLOOR};
use crate::model::{terminal_cost, Channel, JointAction, JointBelief, User};

/// A cost functional usable by the dynamic program, the telescoping check
/// and the infinite-horizon solver.
pub trait CostFunctional: Send + Sync {
    fn name(&self) -> String;

    /// Instantaneous cost `c(π, e)`.
    fn stage_cost(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64;

    /// Terminal cost used by the dynamic program alongside the stage costs.
    fn terminal_cost(&self, pi: &JointBelief, base: LogBase) -> f64;

    /// The undecomposed terminal functional whose expectation the stage costs
    /// telescope into.
    fn terminal_quantity(&self, pi: &JointBelief, base: LogBase) -> f64;

    /// Whether the objective has a stationary instantaneous form.
    fn has_stage_form(&self) -> bool {
        true
    }

    /// Whether `stage_cost` hit a saturation cap instead of its true
    /// (infinite) value.
    fn stage_saturates(&self, _pi: &JointBelief, _e: &JointAction, _ch: &Channel, _base: LogBase) -> bool {
        false
    }
}

/// `c(π,e) = -Σ_{z,w} Q(z|e(w)) π(w) log[Q(z|e(w)) / P(z|π,e)]`.
pub fn cost_joint_entropy(pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
    let (m1, m2) = (pi.m1(), pi.m2());
    let mut c = 0.0;
    for z in 0..ch.z_size() {
        let mut pz = 0.0;
        for w1 in 0..m1 {
            for w2 in 0..m2 {
                pz += e.likelihood(ch, w1, w2, z) * pi.get(w1, w2);
            }
        }
        if pz <= PROB_FLOOR {
            continue;
        }
        for w1 in 0..m1 {
            for w2 in 0..m2 {
                let q = e.likelihood(ch, w1, w2, z);
                let mass = q * pi.get(w1, w2);
                if mass > PROB_FLOOR {
                    c -= mass * base.log(q / pz);
                }
            }
        }
    }
    c
}

/// `c(π,e) = -Σ Q(z|e(w)) π(w) log[Q(z|e(w)) / Σ_{w̃ⁱ} Q(z|e(w̃ⁱ, w⁻ⁱ)) π(w̃ⁱ|w⁻ⁱ)]`
/// for the given user `i`.
pub fn cost_conditional_entropy(pi: &JointBelief, e: &JointAction, ch: &Channel, user: User, base: LogBase) -> f64 {
    let (m1, m2) = (pi.m1(), pi.m2());
    let other = pi.marginal(user.other());
    let mut c = 0.0;
    for z in 0..ch.z_size() {
        for w1 in 0..m1 {
            for w2 in 0..m2 {
                let q = e.likelihood(ch, w1, w2, z);
                let mass = q * pi.get(w1, w2);
                if mass <= PROB_FLOOR {
                    continue;
                }
                let denom = match user {
                    User::One => (0..m1).map(|v| e.likelihood(ch, v, w2, z) * pi.get(v, w2)).sum::<f64>() / other[w2],
                    User::Two => (0..m2).map(|v| e.likelihood(ch, w1, v, z) * pi.get(w1, v)).sum::<f64>() / other[w1],
                };
                c -= mass * base.log(q / denom);
            }
        }
    }
    c
}

/// Value of `-EJS` with a flag raised when a divergence saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EjsCost {
    pub value: f64,
    pub overflow: bool,
}

/// Pairs with `1 - π(w)` below this are skipped.
pub const EJS_POINT_MASS_SKIP: f64 = 1e-12;

/// `c(π,e) = -Σ_w π(w) D(Q(·|e(w)) ‖ Σ_{w̃≠w} π(w̃)/(1-π(w)) Q(·|e(w̃)))`.
pub fn cost_ejs(pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> EjsCost {
    let (m1, m2) = (pi.m1(), pi.m2());
    let zs = ch.z_size();
    let mut value = 0.0;
    let mut overflow = false;
    let mut mixture = vec![0.0; zs];
    for w1 in 0..m1 {
        for w2 in 0..m2 {
            let p = pi.get(w1, w2);
            if p <= 0.0 || 1.0 - p < EJS_POINT_MASS_SKIP {
                continue;
            }
            mixture.iter_mut().for_each(|v| *v = 0.0);
            for v1 in 0..m1 {
                for v2 in 0..m2 {
                    if (v1, v2) == (w1, w2) {
                        continue;
                    }
                    let weight = pi.get(v1, v2) / (1.0 - p);
                    for (z, slot) in mixture.iter_mut().enumerate() {
                        *slot += weight * e.likelihood(ch, v1, v2, z);
                    }
                }
            }
            let own = ch.row(e.e1.apply(w1), e.e2.apply(w2));
            let d = kl_divergence(own, &mixture, base);
            overflow |= d.saturated;
            value -= p * d.value;
        }
    }
    EjsCost { value, overflow }
}

pub struct ErrorProbability;

impl CostFunctional for ErrorProbability {
    fn name(&self) -> String {
        "error_probability".into()
    }
    fn stage_cost(&self, _: &JointBelief, _: &JointAction, _: &Channel, _: LogBase) -> f64 {
        0.0
    }
    fn terminal_cost(&self, pi: &JointBelief, _: LogBase) -> f64 {
        terminal_cost(pi)
    }
    fn terminal_quantity(&self, pi: &JointBelief, _: LogBase) -> f64 {
        terminal_cost(pi)
    }
    fn has_stage_form(&self) -> bool {
        false
    }
}

pub struct JointEntropyDrift;

impl CostFunctional for JointEntropyDrift {
    fn name(&self) -> String {
        "joint_entropy_drift".into()
    }
    fn stage_cost(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
        cost_joint_entropy(pi, e, ch, base)
    }
    fn terminal_cost(&self, _: &JointBelief, _: LogBase) -> f64 {
        0.0
    }
    fn terminal_quantity(&self, pi: &JointBelief, base: LogBase) -> f64 {
        crate::info::entropy(pi.probs(), base)
    }
}

pub struct ConditionalEntropyDrift(pub User);

impl CostFunctional for ConditionalEntropyDrift {
    fn name(&self) -> String {
        match self.0 {
            User::One => "conditional_entropy_drift_user1".into(),
            User::Two => "conditional_entropy_drift_user2".into(),
        }
    }
    fn stage_cost(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
        cost_conditional_entropy(pi, e, ch, self.0, base)
    }
    fn terminal_cost(&self, _: &JointBelief, _: LogBase) -> f64 {
        0.0
    }
    /// `-Σ π(w) log π(wⁱ | w⁻ⁱ)`.
    fn terminal_quantity(&self, pi: &JointBelief, base: LogBase) -> f64 {
        let other = pi.marginal(self.0.other());
        let mut h = 0.0;
        for w1 in 0..pi.m1() {
            for w2 in 0..pi.m2() {
                let p = pi.get(w1, w2);
                if p > PROB_FLOOR {
                    let cond = match self.0 {
                        User::One => p / other[w2],
                        User::Two => p / other[w1],
                    };
                    h -= p * base.log(cond);
                }
            }
        }
        h
    }
}

pub struct Ejs;

impl CostFunctional for Ejs {
    fn name(&self) -> String {
        "ejs".into()
    }
    fn stage_cost(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
        let c = cost_ejs(pi, e, ch, base);
        if c.overflow {
            log::debug!("EJS divergence saturated at {KL_SATURATION}");
        }
        c.value
    }
    fn terminal_cost(&self, _: &JointBelief, _: LogBase) -> f64 {
        0.0
    }
    /// `Σ_w π(w) log[(1-π(w)) / π(w)]`; a point mass saturates.
    fn terminal_quantity(&self, pi: &JointBelief, base: LogBase) -> f64 {
        let mut q = 0.0;
        for &p in pi.probs() {
            if p <= PROB_FLOOR {
                continue;
            }
            if 1.0 - p < EJS_POINT_MASS_SKIP {
                return -KL_SATURATION;
            }
            q += p * base.log((1.0 - p) / p);
        }
        q
    }
    fn stage_saturates(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> bool {
        cost_ejs(pi, e, ch, base).overflow
    }
}

/// A non-negative combination of other costs.
pub struct Weighted {
    parts: Vec<(f64, Box<dyn CostFunctional>)>,
}

impl Weighted {
    pub fn new(parts: Vec<(f64, Box<dyn CostFunctional>)>) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(Error::invalid("weighted cost needs non-negative weights"));
        }
        Ok(Weighted { parts })
    }
}

impl CostFunctional for Weighted {
    fn name(&self) -> String {
        let inner: Vec<String> = self.parts.iter().map(|(w, c)| format!("{w}*{}", c.name())).collect();
        format!("weighted({})", inner.join("+"))
    }
    fn stage_cost(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> f64 {
        self.parts.iter().map(|(w, c)| w * c.stage_cost(pi, e, ch, base)).sum()
    }
    fn terminal_cost(&self, pi: &JointBelief, base: LogBase) -> f64 {
        self.parts.iter().map(|(w, c)| w * c.terminal_cost(pi, base)).sum()
    }
    fn terminal_quantity(&self, pi: &JointBelief, base: LogBase) -> f64 {
        self.parts.iter().map(|(w, c)| w * c.terminal_quantity(pi, base)).sum()
    }
    fn has_stage_form(&self) -> bool {
        self.parts.iter().all(|(_, c)| c.has_stage_form())
    }
    fn stage_saturates(&self, pi: &JointBelief, e: &JointAction, ch: &Channel, base: LogBase) -> bool {
        self.parts.iter().any(|(w, c)| *w > 0.0 && c.stage_saturates(pi, e, ch, base))
    }
}

type CostFactory = Box<dyn Fn(&[f64]) -> Result<Box<dyn CostFunctional>> + Send + Sync>;

/// Cost functionals by name. `weighted(a, b, c)` combines the joint entropy
/// drift and the two conditional entropy drifts with weights `a, b, c`.
pub struct CostRegistry {
    factories: BTreeMap<&'static str, CostFactory>,
}

fn fixed<C: CostFunctional + 'static>(make: fn() -> C) -> CostFactory {
    Box::new(move |args: &[f64]| {
        if !args.is_empty() {
            return Err(Error::invalid("this cost takes no arguments"));
        }
        Ok(Box::new(make()) as Box<dyn CostFunctional>)
    })
}

impl CostRegistry {
    pub fn empty() -> Self {
        CostRegistry { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("error_probability", fixed(|| ErrorProbability));
        reg.register("joint_entropy_drift", fixed(|| JointEntropyDrift));
        reg.register("conditional_entropy_drift_user1", fixed(|| ConditionalEntropyDrift(User::One)));
        reg.register("conditional_entropy_drift_user2", fixed(|| ConditionalEntropyDrift(User::Two)));
        reg.register("ejs", fixed(|| Ejs));
        reg.register(
            "weighted",
            Box::new(|args: &[f64]| {
                let [a, b, c] = args else {
                    return Err(Error::invalid("weighted takes three weights (joint, user1, user2)"));
                };
                Ok(Box::new(Weighted::new(vec![
                    (*a, Box::new(JointEntropyDrift)),
                    (*b, Box::new(ConditionalEntropyDrift(User::One))),
                    (*c, Box::new(ConditionalEntropyDrift(User::Two))),
                ])?) as Box<dyn CostFunctional>)
            }),
        );
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: CostFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, descriptor: &str) -> Result<Box<dyn CostFunctional>> {
        let (name, args) = parse_descriptor(descriptor)?;
        let factory = self.factories.get(name.as_str()).ok_or(Error::UnknownName { kind: "cost functional", name })?;
        factory(&args)
    }
}

impl Default for CostRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::info::{binary_entropy, entropy};
    use crate::model::{all_joint_actions, ProblemSpec};

    const BITS: LogBase = LogBase::Bits;

    fn identity(spec: &ProblemSpec) -> JointAction {
        JointAction::from_values(spec, vec![0, 1], vec![0, 1]).unwrap()
    }

    #[test]
    fn uniform_channel_costs_vanish() {
        let spec = ProblemSpec::binary();
        let ch = channels::uniform(&spec).unwrap();
        let pi = JointBelief::from_probs(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for e in all_joint_actions(&spec) {
            assert!(cost_joint_entropy(&pi, &e, &ch, BITS).abs() < 1e-15);
            assert!(cost_conditional_entropy(&pi, &e, &ch, User::One, BITS).abs() < 1e-15);
            assert!(cost_ejs(&pi, &e, &ch, BITS).value.abs() < 1e-15);
        }
    }

    #[test]
    fn identity_channel_full_resolution() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let pi = JointBelief::uniform(2, 2);
        let e = identity(&spec);
        assert!((cost_joint_entropy(&pi, &e, &ch, BITS) + 2.0).abs() < 1e-15);
        assert!((cost_conditional_entropy(&pi, &e, &ch, User::One, BITS) + 1.0).abs() < 1e-15);
        assert!((cost_conditional_entropy(&pi, &e, &ch, User::Two, BITS) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn xor_bsc_identity_encoders() {
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let pi = JointBelief::uniform(2, 2);
        let e = identity(&spec);
        let cap = 1.0 - binary_entropy(0.1, BITS);
        assert!((cost_joint_entropy(&pi, &e, &ch, BITS) + cap).abs() < 1e-12);
        assert!((cost_joint_entropy(&pi, &e, &ch, BITS) + 0.531_004_406_410_718_8).abs() < 1e-12);
        assert!((cost_conditional_entropy(&pi, &e, &ch, User::One, BITS) + cap).abs() < 1e-12);
    }

    #[test]
    fn xor_bsc_ejs_golden() {
        // per pair: D(Bern(0.9) || Bern(1.1/3)) in bits, identical for all four pairs
        let spec = ProblemSpec::binary();
        let ch = channels::xor_bsc(&spec, 0.1).unwrap();
        let pi = JointBelief::uniform(2, 2);
        let m: f64 = 1.1 / 3.0;
        let direct = 0.9 * (0.9 / m).log2() + 0.1 * (0.1 / (1.0 - m)).log2();
        let c = cost_ejs(&pi, &identity(&spec), &ch, BITS);
        assert!(!c.overflow);
        assert!((c.value + direct).abs() < 1e-12);
        assert!((c.value + 0.899_613_793_901_311_4).abs() < 1e-12);
    }

    #[test]
    fn ejs_point_mass_and_overflow() {
        let spec = ProblemSpec { z_size: 4, ..ProblemSpec::binary() };
        let ch = channels::identity_pair(&spec).unwrap();
        let pm = JointBelief::point_mass(2, 2, 0, 1);
        assert_eq!(cost_ejs(&pm, &identity(&spec), &ch, BITS).value, 0.0);
        let c = cost_ejs(&JointBelief::uniform(2, 2), &identity(&spec), &ch, BITS);
        assert!(c.overflow);
        assert!(c.value <= -KL_SATURATION * 0.99);
    }

    #[test]
    fn mutual_information_rewrite() {
        // c_joint = -[H(Z) - Σ_w π(w) H(Q(·|e(w)))]
        let spec = ProblemSpec::binary();
        for seed in 0..5 {
            let ch = channels::random(&spec, seed).unwrap();
            let pi = JointBelief::from_probs(2, 2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
            for e in all_joint_actions(&spec) {
                let pz: Vec<f64> = (0..2)
                    .map(|z| (0..4).map(|w| e.likelihood(&ch, w / 2, w % 2, z) * pi.probs()[w]).sum())
                    .collect();
                let cond: f64 = (0..4).map(|w| pi.probs()[w] * entropy(ch.row(e.e1.apply(w / 2), e.e2.apply(w % 2)), BITS)).sum();
                let rewrite = -(entropy(&pz, BITS) - cond);
                assert!((cost_joint_entropy(&pi, &e, &ch, BITS) - rewrite).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn registry_builds_every_kind() {
        let reg = CostRegistry::with_builtins();
        for name in reg.names().filter(|n| *n != "weighted") {
            assert_eq!(reg.build(name).unwrap().name(), name);
        }
        let w = reg.build("weighted(1, 0.5, 0.5)").unwrap();
        assert!(w.has_stage_form());
        assert!(reg.build("weighted(1)").is_err());
        assert!(reg.build("weighted(-1, 0, 0)").is_err());
        assert!(reg.build("ejs(2)").is_err());
        assert!(!reg.build("error_probability").unwrap().has_stage_form());
    }
}
