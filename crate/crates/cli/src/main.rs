use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsaht::LogBase;

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

/// Decentralized active hypothesis testing over a multiple access channel:
/// dynamic programming, oracles, stage costs and directed-information rates.
#[derive(Debug, Parser)]
#[command(name = "dsaht", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on belief-tree and policy-tree nodes.
    #[arg(long, global = true)]
    cap_nodes: Option<usize>,

    /// Add exact rational results where available.
    #[arg(long, global = true)]
    rational: bool,

    #[arg(long, global = true, value_parser = parse_log_base)]
    log_base: Option<LogBase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the config and the channel matrix.
    Validate,
    /// Solve the finite-horizon dynamic program.
    SolveDp,
    /// Exact error probability and cost of the configured policy.
    EvalPolicy,
    /// Monte Carlo error rate of the configured policy.
    Simulate,
    /// Exhaustive search over unstructured deterministic strategies.
    OracleUnstructured,
    /// Stage-cost table and telescoping check.
    Costs,
    /// Infinite-horizon fixed point on a simplex grid.
    FixedPoint,
    /// Directed informations of the configured policy.
    CapacityEval,
    /// Best weighted directed information over structured policies.
    CapacitySearch,
    /// `capacity-search` for every configured weight vector.
    LambdaSweep,
    /// Run the structural consistency checks.
    CheckInvariants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::SolveDp => "solve-dp",
            Command::EvalPolicy => "eval-policy",
            Command::Simulate => "simulate",
            Command::OracleUnstructured => "oracle-unstructured",
            Command::Costs => "costs",
            Command::FixedPoint => "fixed-point",
            Command::CapacityEval => "capacity-eval",
            Command::CapacitySearch => "capacity-search",
            Command::LambdaSweep => "lambda-sweep",
            Command::CheckInvariants => "check-invariants",
        }
    }
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    s.parse()
}

/// Everything that ends a run early, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Io(String),
    Validation(String),
    Budget(String),
    Invariant(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Io(m) => write!(f, "io error: {m}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Budget(m) => write!(f, "{m}"),
            Failure::Invariant(m) => write!(f, "invariant check failed: {m}"),
        }
    }
}

impl From<dsaht::Error> for Failure {
    fn from(e: dsaht::Error) -> Self {
        match e {
            dsaht::Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            dsaht::Error::NegativeInformation { .. } => Failure::Invariant(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Validation("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = cli.cap_nodes {
        cfg.caps.nodes = cap;
    }
    if cli.rational {
        cfg.rational = true;
    }
    if let Some(base) = cli.log_base {
        cfg.spec.log_base = base;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("dsaht {}: {failure}", cli.command.name());
            ExitCode::from(failure.exit_code())
        }
    }
}
