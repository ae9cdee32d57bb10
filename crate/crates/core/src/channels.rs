//! Built-in channel families, addressable by name (`uniform`,
//! `identity-pair`, `xor-bsc(p)`, `random(seed)`).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::descriptor::parse_descriptor;
use crate::error::{Error, Result};
use crate::model::{validate_channel, Channel, ProblemSpec};

/// A named family of channels parameterized by a list of numbers.
pub trait ChannelGenerator: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, spec: &ProblemSpec, args: &[f64]) -> Result<Channel>;
}

/// Every output equally likely regardless of inputs.
pub fn uniform(spec: &ProblemSpec) -> Result<Channel> {
    let row = vec![1.0 / spec.z_size as f64; spec.z_size];
    validate_channel(spec, &vec![row; spec.x1_size * spec.x2_size])
}

/// Noiseless `Z = (X1, X2)`, encoded as `z = x1 * |X2| + x2`.
pub fn identity_pair(spec: &ProblemSpec) -> Result<Channel> {
    let pairs = spec.x1_size * spec.x2_size;
    if spec.z_size != pairs {
        return Err(Error::invalid(format!("identity-pair needs |Z| = |X1|*|X2| = {pairs}, got {}", spec.z_size)));
    }
    let rows = (0..pairs)
        .map(|r| {
            let mut row = vec![0.0; pairs];
            row[r] = 1.0;
            row
        })
        .collect::<Vec<_>>();
    validate_channel(spec, &rows)
}

/// Binary `Z = X1 ⊕ X2`, flipped with probability `p`.
pub fn xor_bsc(spec: &ProblemSpec, p: f64) -> Result<Channel> {
    if spec.x1_size != 2 || spec.x2_size != 2 || spec.z_size != 2 {
        return Err(Error::invalid("xor-bsc needs binary inputs and output"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("crossover probability {p} outside [0, 1]")));
    }
    let rows = (0..4)
        .map(|r| {
            let s = (r / 2) ^ (r % 2);
            let mut row = vec![p; 2];
            row[s] = 1.0 - p;
            row
        })
        .collect::<Vec<_>>();
    validate_channel(spec, &rows)
}

/// Each row drawn from a flat Dirichlet, seeded.
pub fn random(spec: &ProblemSpec, seed: u64) -> Result<Channel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..spec.x1_size * spec.x2_size)
        .map(|_| {
            let raw: Vec<f64> = (0..spec.z_size).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v: f64| v / s).collect()
        })
        .collect::<Vec<Vec<f64>>>();
    validate_channel(spec, &rows)
}

struct Uniform;
struct IdentityPair;
struct XorBsc;
struct RandomRows;

fn expect_args(name: &str, args: &[f64], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::invalid(format!("channel `{name}` takes {n} argument(s), got {}", args.len())));
    }
    Ok(())
}

impl ChannelGenerator for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }
    fn generate(&self, spec: &ProblemSpec, args: &[f64]) -> Result<Channel> {
        expect_args(self.name(), args, 0)?;
        uniform(spec)
    }
}

impl ChannelGenerator for IdentityPair {
    fn name(&self) -> &'static str {
        "identity-pair"
    }
    fn generate(&self, spec: &ProblemSpec, args: &[f64]) -> Result<Channel> {
        expect_args(self.name(), args, 0)?;
        identity_pair(spec)
    }
}

impl ChannelGenerator for XorBsc {
    fn name(&self) -> &'static str {
        "xor-bsc"
    }
    fn generate(&self, spec: &ProblemSpec, args: &[f64]) -> Result<Channel> {
        expect_args(self.name(), args, 1)?;
        xor_bsc(spec, args[0])
    }
}

impl ChannelGenerator for RandomRows {
    fn name(&self) -> &'static str {
        "random"
    }
    fn generate(&self, spec: &ProblemSpec, args: &[f64]) -> Result<Channel> {
        expect_args(self.name(), args, 1)?;
        if args[0] < 0.0 || args[0].fract() != 0.0 {
            return Err(Error::invalid("random channel seed must be a non-negative integer"));
        }
        random(spec, args[0] as u64)
    }
}

pub struct ChannelRegistry {
    generators: BTreeMap<&'static str, Box<dyn ChannelGenerator>>,
}

impl ChannelRegistry {
    pub fn empty() -> Self {
        ChannelRegistry { generators: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(Uniform));
        reg.register(Box::new(IdentityPair));
        reg.register(Box::new(XorBsc));
        reg.register(Box::new(RandomRows));
        reg
    }

    pub fn register(&mut self, generator: Box<dyn ChannelGenerator>) {
        self.generators.insert(generator.name(), generator);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.generators.keys().copied()
    }

    /// Resolves a descriptor such as `xor-bsc(0.1)` or `uniform`.
    pub fn build(&self, descriptor: &str, spec: &ProblemSpec) -> Result<Channel> {
        let (name, args) = parse_descriptor(descriptor)?;
        let generator = self
            .generators
            .get(name.as_str())
            .ok_or(Error::UnknownName { kind: "channel generator", name })?;
        generator.generate(spec, &args)
    }
}

impl Default for ChannelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
