//! Experiment configuration: one TOML file per experiment.
//!
//! ```toml
//! horizon = 2
//! policy = "dp-optimal"
//!
//! [spec]
//! x1_size = 2
//! x2_size = 2
//! z_size = 2
//! m1 = 2
//! m2 = 2
//!
//! [channel]
//! generator = "xor-bsc(0.1)"
//! ```

use std::path::{Path, PathBuf};

use dsaht::capacity::{LambdaWeights, DEFAULT_HISTORY_CAP, DEFAULT_POLICY_CAP, DEFAULT_STATE_CAP};
use dsaht::channels::ChannelRegistry;
use dsaht::dp::{DEFAULT_NODE_CAP, DEFAULT_STRATEGY_CAP};
use dsaht::model::{joint_action_count, ROW_SUM_TOLERANCE};
use dsaht::objective::{FixedPointMode, SimplexGrid};
use dsaht::{JointAction, LogBase, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    #[serde(default = "default_objective")]
    pub objective: String,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Also run the unstructured brute-force oracle in `solve-dp`.
    #[serde(default)]
    pub oracle: bool,
    /// Add exact rational results where an exact routine exists.
    #[serde(default)]
    pub rational: bool,
    /// Weights for `capacity-eval`, `capacity-search` and `check-invariants`.
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 3],
    /// Weight vectors for `lambda-sweep`.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<[f64; 3]>,
    /// Restrict candidate joint actions to these enumeration indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_set: Option<Vec<usize>>,
    pub spec: SpecConfig,
    pub channel: ChannelSource,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub x1_size: usize,
    pub x2_size: usize,
    pub z_size: usize,
    pub m1: usize,
    pub m2: usize,
    #[serde(default)]
    pub log_base: LogBase,
    /// Only the uniform prior is supported; listed so that configs can be
    /// explicit about it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Prior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prior {
    Named(String),
    Probabilities(Vec<f64>),
}

/// Exactly one of the three fields must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSource {
    /// Built-in generator descriptor, e.g. `xor-bsc(0.1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// Rows `Q(· | x1, x2)`, row-major in `(x1, x2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Comma or whitespace separated rows in the same order as `matrix`,
    /// relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub nodes: usize,
    pub strategies: f64,
    pub histories: f64,
    pub states: usize,
    pub policies: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            nodes: DEFAULT_NODE_CAP,
            strategies: DEFAULT_STRATEGY_CAP,
            histories: DEFAULT_HISTORY_CAP,
            states: DEFAULT_STATE_CAP,
            policies: DEFAULT_POLICY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub resolution: u32,
    /// `average` or `discounted`.
    pub mode: String,
    pub beta: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { resolution: 10, mode: "average".into(), beta: 0.9, tolerance: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `lambda_sweep.csv` next to the JSON.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), csv: true }
    }
}

fn default_objective() -> String {
    "error_probability".into()
}

fn default_policy() -> String {
    "dp-optimal".into()
}

fn default_seed() -> u64 {
    42
}

fn default_trials() -> u64 {
    100_000
}

fn default_lambda() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_lambdas() -> Vec<[f64; 3]> {
    vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| invalid(format!("config does not parse: {e}")))
    }

    /// Reads a config file; a relative channel file is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(file) = cfg.channel.file.as_mut() {
            if file.is_relative() {
                *file = path.parent().unwrap_or(Path::new(".")).join(&*file);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, Failure> {
        let s = &self.spec;
        let spec = ProblemSpec::new(s.x1_size, s.x2_size, s.z_size, s.m1, s.m2)?.with_log_base(s.log_base);
        match &s.prior {
            None => {}
            Some(Prior::Named(name)) if name == "uniform" => {}
            Some(Prior::Named(name)) => return Err(invalid(format!("unsupported prior `{name}`; only `uniform` is allowed"))),
            Some(Prior::Probabilities(p)) => {
                let u = 1.0 / spec.pair_count() as f64;
                if p.len() != spec.pair_count() || p.iter().any(|v| (v - u).abs() > 1e-12) {
                    return Err(invalid("only the uniform message prior is supported"));
                }
            }
        }
        Ok(spec)
    }

    /// Checks everything that does not need the channel itself.
    pub fn validate(&self) -> Result<(), Failure> {
        let spec = self.problem_spec()?;
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        let sources = [self.channel.generator.is_some(), self.channel.matrix.is_some(), self.channel.file.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(invalid("exactly one of channel.generator, channel.matrix, channel.file must be set"));
        }
        if let Some(file) = &self.channel.file {
            if !file.is_file() {
                return Err(invalid(format!("channel file {} does not exist", file.display())));
            }
        }
        let c = &self.caps;
        if c.nodes == 0 || c.states == 0 || !(c.strategies > 0.0 && c.histories > 0.0 && c.policies > 0.0) {
            return Err(invalid("all caps must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        self.lambda_weights()?;
        for l in &self.lambdas {
            // rows are independent, but a malformed weight is still a config error
            if l.iter().any(|v| !v.is_finite()) {
                return Err(invalid("lambda weights must be finite"));
            }
        }
        if let Some(set) = &self.action_set {
            let count = joint_action_count(&spec).unwrap_or(usize::MAX);
            if set.is_empty() || set.iter().any(|&a| a >= count) {
                return Err(invalid(format!("action_set must be non-empty indices below {count}")));
            }
        }
        self.fixed_point_mode()?;
        let fp = &self.fixed_point;
        if fp.resolution == 0 || !(fp.tolerance > 0.0) || fp.max_iterations == 0 {
            return Err(invalid("fixed_point resolution, tolerance and max_iterations must be positive"));
        }
        Ok(())
    }

    pub fn lambda_weights(&self) -> Result<LambdaWeights, Failure> {
        let [a, b, c] = self.lambda;
        Ok(LambdaWeights::new(a, b, c)?)
    }

    pub fn fixed_point_mode(&self) -> Result<FixedPointMode, Failure> {
        match self.fixed_point.mode.as_str() {
            "average" => Ok(FixedPointMode::Average),
            "discounted" if self.fixed_point.beta > 0.0 && self.fixed_point.beta < 1.0 => {
                Ok(FixedPointMode::Discounted { beta: self.fixed_point.beta })
            }
            "discounted" => Err(invalid("discount beta must lie in (0, 1)")),
            other => Err(invalid(format!("unknown fixed-point mode `{other}`"))),
        }
    }

    pub fn grid(&self) -> Result<SimplexGrid, Failure> {
        let spec = self.problem_spec()?;
        Ok(SimplexGrid::new(self.fixed_point.resolution, spec.pair_count())?)
    }

    pub fn actions(&self) -> Result<Option<Vec<JointAction>>, Failure> {
        let spec = self.problem_spec()?;
        Ok(self.action_set.as_ref().map(|set| set.iter().map(|&a| JointAction::from_index(&spec, a)).collect()))
    }

    /// The raw channel rows before stochasticity checks.
    pub fn channel_rows(&self) -> Result<Vec<Vec<f64>>, Failure> {
        let spec = self.problem_spec()?;
        if let Some(generator) = &self.channel.generator {
            return Ok(ChannelRegistry::with_builtins().build(generator, &spec)?.rows());
        }
        if let Some(matrix) = &self.channel.matrix {
            return Ok(matrix.clone());
        }
        let path = self.channel.file.as_ref().ok_or_else(|| invalid("no channel source"))?;
        read_matrix(path)
    }

}

/// Largest `|Σ_z Q(z|x) - 1|` and smallest entry over all rows.
pub fn row_diagnostics(rows: &[Vec<f64>]) -> (f64, f64) {
    let dev = rows.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let min = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    (dev, min)
}

pub fn rows_look_stochastic(rows: &[Vec<f64>]) -> bool {
    let (dev, min) = row_diagnostics(rows);
    dev <= ROW_SUM_TOLERANCE && min >= 0.0
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .flat_map(|field| field.split_whitespace())
            .map(|v| v.parse::<f64>().map_err(|_| invalid(format!("{}: bad number `{v}`", path.display()))))
            .collect::<Result<Vec<f64>, Failure>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
horizon = 2

[spec]
x1_size = 2
x2_size = 2
z_size = 2
m1 = 2
m2 = 2

[channel]
generator = "xor-bsc(0.1)"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(BASIC).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.policy, "dp-optimal");
        assert_eq!(cfg.caps, Caps::default());
        assert_eq!(cfg.channel_rows().unwrap()[1], vec![0.1, 0.9]);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::parse(BASIC).unwrap();
        cfg.action_set = Some(vec![1, 6]);
        cfg.spec.prior = Some(Prior::Named("uniform".into()));
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn exactly_one_channel_source() {
        let mut cfg = ExperimentConfig::parse(BASIC).unwrap();
        cfg.channel.matrix = Some(vec![vec![0.5, 0.5]; 4]);
        assert!(matches!(cfg.validate(), Err(Failure::Validation(_))));
        cfg.channel = ChannelSource::default();
        assert!(matches!(cfg.validate(), Err(Failure::Validation(_))));
    }

    #[test]
    fn non_uniform_prior_rejected() {
        let mut cfg = ExperimentConfig::parse(BASIC).unwrap();
        cfg.spec.prior = Some(Prior::Probabilities(vec![0.4, 0.2, 0.2, 0.2]));
        assert!(cfg.validate().is_err());
        cfg.spec.prior = Some(Prior::Probabilities(vec![0.25; 4]));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse(&format!("{BASIC}\n[extra]\nx = 1\n")).is_err());
    }

    #[test]
    fn zero_caps_rejected() {
        let mut cfg = ExperimentConfig::parse(BASIC).unwrap();
        cfg.caps.nodes = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn matrix_file_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.txt");
        std::fs::write(&path, "# rows by (x1, x2)\n0.9, 0.1\n0.1 0.9\n0.1,0.9\n0.9,0.1\n").unwrap();
        let rows = read_matrix(&path).unwrap();
        assert_eq!(rows, vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.1, 0.9], vec![0.9, 0.1]]);
    }
}
