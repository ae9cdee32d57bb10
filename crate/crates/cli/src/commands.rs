use std::path::PathBuf;

use dsaht::capacity::{
    check_factorization, check_kernel_independence, evaluate_in, full_history_in, lambda_sweep, search_cn_lambda,
    DirectedInfoBreakdown, FactorizationReport, KernelReport, LambdaWeights, SearchResult, SweepRow,
};
use dsaht::dp::{
    backward_dp, brute_force_unstructured, build_reachable_tree, check_policy_independence, evaluate_policy_cost,
    evaluate_policy_exact, simulate_monte_carlo, IndependenceReport, MonteCarloEstimate, PolicyContext, PolicyRegistry,
    PolicyTree,
};
use dsaht::exact::{exact_brute_force, exact_dp_value, to_f64};
use dsaht::model::all_joint_actions;
use dsaht::objective::{check_telescoping, fixed_point_solve, CostFunctional, CostRegistry, FixedPointResult, TelescopingReport};
use dsaht::{Channel, JointAction, ProblemSpec};
use log::info;
use serde::Serialize;

use crate::config::{row_diagnostics, rows_look_stochastic, ExperimentConfig};
use crate::output::{sweep_csv, write_atomic, write_json, CsvRow};
use crate::{Command, Failure};

/// Tolerances of the structural checks.
const EXACT_TOLERANCE: f64 = 1e-12;
const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

/// Stage costs listed by `costs`.
const STAGE_COSTS: [&str; 4] = ["joint_entropy_drift", "conditional_entropy_drift_user1", "conditional_entropy_drift_user2", "ejs"];

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    subcommand: &'static str,
    spec: ProblemSpec,
    horizon: usize,
    channel: ChannelEcho<'a>,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct ChannelEcho<'a> {
    source: String,
    rows: &'a [Vec<f64>],
}

struct Env<'a> {
    cfg: &'a ExperimentConfig,
    spec: ProblemSpec,
    rows: Vec<Vec<f64>>,
    actions: Option<Vec<JointAction>>,
}

impl Env<'_> {
    fn channel(&self) -> Result<Channel, Failure> {
        Ok(dsaht::validate_channel(&self.spec, &self.rows)?)
    }

    fn objective(&self) -> Result<Box<dyn CostFunctional>, Failure> {
        Ok(CostRegistry::with_builtins().build(&self.cfg.objective)?)
    }

    fn policy(&self, descriptor: &str, ch: &Channel, cost: &dyn CostFunctional) -> Result<PolicyTree, Failure> {
        let ctx = PolicyContext {
            spec: &self.spec,
            channel: ch,
            horizon: self.cfg.horizon,
            cost,
            node_cap: self.cfg.caps.nodes,
            action_set: self.actions.as_deref(),
        };
        Ok(PolicyRegistry::with_builtins().build(descriptor, &ctx)?)
    }

    fn write<T: Serialize>(&self, cmd: Command, body: T) -> Result<PathBuf, Failure> {
        let c = &self.cfg.channel;
        let source = match (&c.generator, &c.file) {
            (Some(g), _) => g.clone(),
            (None, Some(f)) => format!("file:{}", f.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()),
            (None, None) => "inline".into(),
        };
        let artifact = Artifact {
            subcommand: cmd.name(),
            spec: self.spec,
            horizon: self.cfg.horizon,
            channel: ChannelEcho { source, rows: &self.rows },
            body,
        };
        let stem = cmd.name().replace('-', "_");
        let path = write_json(&self.cfg.output.dir, &stem, &artifact)?;
        info!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let env = Env { cfg, spec: cfg.problem_spec()?, rows: cfg.channel_rows()?, actions: cfg.actions()? };
    match cmd {
        Command::Validate => validate(&env),
        Command::SolveDp => solve_dp(&env),
        Command::EvalPolicy => eval_policy(&env),
        Command::Simulate => simulate(&env),
        Command::OracleUnstructured => oracle_unstructured(&env),
        Command::Costs => costs(&env),
        Command::FixedPoint => fixed_point(&env),
        Command::CapacityEval => capacity_eval(&env),
        Command::CapacitySearch => capacity_search(&env),
        Command::LambdaSweep => sweep(&env),
        Command::CheckInvariants => check_invariants(&env),
    }
}

#[derive(Serialize)]
struct ValidateReport {
    stochastic: bool,
    dimensions_match: bool,
    max_row_sum_deviation: f64,
    min_entry: f64,
    error: Option<String>,
}

fn validate(env: &Env) -> Result<PathBuf, Failure> {
    let (dev, min) = row_diagnostics(&env.rows);
    let checked = env.channel();
    let report = ValidateReport {
        stochastic: rows_look_stochastic(&env.rows),
        dimensions_match: env.rows.len() == env.spec.x1_size * env.spec.x2_size
            && env.rows.iter().all(|r| r.len() == env.spec.z_size),
        max_row_sum_deviation: dev,
        min_entry: min,
        error: checked.as_ref().err().map(|e| e.to_string()),
    };
    let path = env.write(Command::Validate, report)?;
    // the fully resolved config, defaults included, for reproducing the run
    write_atomic(&env.cfg.output.dir.join("resolved_config.toml"), env.cfg.to_toml().as_bytes())?;
    checked.map(|_| path)
}

#[derive(Serialize)]
struct OracleSummary {
    pe: f64,
    strategies_examined: f64,
    gap: f64,
}

#[derive(Serialize)]
struct RationalValues {
    dp_value: String,
    dp_value_f64: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force_f64: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equal: Option<bool>,
}

#[derive(Serialize)]
struct SolveDpReport {
    objective: String,
    optimal_value: f64,
    /// Error probability of the optimal policy.
    pe_star: f64,
    restricted: bool,
    layer_sizes: Vec<usize>,
    node_count: usize,
    oracle: Option<OracleSummary>,
    rational: Option<RationalValues>,
    policy: PolicyTree,
}

fn require_error_objective(env: &Env, what: &str) -> Result<(), Failure> {
    if env.cfg.objective != "error_probability" || env.actions.is_some() {
        return Err(Failure::Validation(format!(
            "{what} is defined for the error-probability objective over all joint actions"
        )));
    }
    Ok(())
}

fn solve_dp(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let n = env.cfg.horizon;
    let tree = build_reachable_tree(&env.spec, &ch, n, env.actions.as_deref(), env.cfg.caps.nodes)?;
    info!("reachable tree: {:?} nodes per layer", tree.layer_sizes());
    let sol = backward_dp(&tree, &ch, cost.as_ref())?;
    let pe_star = evaluate_policy_exact(&sol.policy, &ch)?;

    let oracle = if env.cfg.oracle {
        require_error_objective(env, "the unstructured oracle")?;
        let brute = brute_force_unstructured(&env.spec, &ch, n, env.cfg.caps.strategies)?;
        Some(OracleSummary { pe: brute.pe, strategies_examined: brute.strategies_examined, gap: (sol.root_value - brute.pe).abs() })
    } else {
        None
    };
    let rational = if env.cfg.rational {
        require_error_objective(env, "rational mode")?;
        let dp = exact_dp_value(&env.spec, &ch, n)?;
        let mut r = RationalValues {
            dp_value: dp.to_string(),
            dp_value_f64: to_f64(&dp),
            brute_force: None,
            brute_force_f64: None,
            equal: None,
        };
        if env.cfg.oracle {
            let brute = exact_brute_force(&env.spec, &ch, n, env.cfg.caps.strategies)?;
            r.brute_force = Some(brute.to_string());
            r.brute_force_f64 = Some(to_f64(&brute));
            r.equal = Some(brute == dp);
        }
        Some(r)
    } else {
        None
    };
    let report = SolveDpReport {
        objective: cost.name(),
        optimal_value: sol.root_value,
        pe_star,
        restricted: sol.restricted,
        layer_sizes: tree.layer_sizes(),
        node_count: tree.node_count(),
        oracle,
        rational,
        policy: sol.policy,
    };
    env.write(Command::SolveDp, report)
}

#[derive(Serialize)]
struct EvalPolicyReport {
    policy_name: String,
    pe: f64,
    objective: String,
    expected_cost: f64,
    node_count: usize,
    policy: PolicyTree,
}

fn eval_policy(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let policy = env.policy(&env.cfg.policy, &ch, cost.as_ref())?;
    let report = EvalPolicyReport {
        policy_name: env.cfg.policy.clone(),
        pe: evaluate_policy_exact(&policy, &ch)?,
        objective: cost.name(),
        expected_cost: evaluate_policy_cost(&policy, &ch, cost.as_ref(), env.spec.log_base)?,
        node_count: policy.nodes().len(),
        policy,
    };
    env.write(Command::EvalPolicy, report)
}

#[derive(Serialize)]
struct SimulateReport {
    policy_name: String,
    seed: u64,
    estimate: MonteCarloEstimate,
    exact_pe: f64,
    within_ci: bool,
}

fn simulate(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let policy = env.policy(&env.cfg.policy, &ch, cost.as_ref())?;
    let estimate = simulate_monte_carlo(&policy, &ch, env.cfg.trials, env.cfg.seed)?;
    let exact_pe = evaluate_policy_exact(&policy, &ch)?;
    let report = SimulateReport {
        policy_name: env.cfg.policy.clone(),
        seed: env.cfg.seed,
        within_ci: (estimate.error_rate - exact_pe).abs() <= estimate.ci_half_width,
        estimate,
        exact_pe,
    };
    env.write(Command::Simulate, report)
}

#[derive(Serialize)]
struct OracleReport {
    pe: f64,
    strategies_examined: f64,
    rational: Option<String>,
    rational_f64: Option<f64>,
    witness: dsaht::dp::UnstructuredStrategy,
}

fn oracle_unstructured(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let n = env.cfg.horizon;
    let brute = brute_force_unstructured(&env.spec, &ch, n, env.cfg.caps.strategies)?;
    let exact = if env.cfg.rational { Some(exact_brute_force(&env.spec, &ch, n, env.cfg.caps.strategies)?) } else { None };
    let report = OracleReport {
        pe: brute.pe,
        strategies_examined: brute.strategies_examined,
        rational: exact.as_ref().map(|v| v.to_string()),
        rational_f64: exact.as_ref().map(to_f64),
        witness: brute.witness,
    };
    env.write(Command::OracleUnstructured, report)
}

#[derive(Serialize)]
struct CostRow {
    action_index: usize,
    action: JointAction,
    costs: Vec<f64>,
}

#[derive(Serialize)]
struct NodeCostRow {
    node: usize,
    depth: usize,
    action_index: usize,
    costs: Vec<f64>,
}

#[derive(Serialize)]
struct CostsReport {
    policy_name: String,
    cost_names: Vec<String>,
    root_actions: Vec<CostRow>,
    policy_nodes: Vec<NodeCostRow>,
    telescoping: Vec<TelescopingReport>,
    tolerance: f64,
    max_residual: f64,
    passed: bool,
}

fn costs(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let registry = CostRegistry::with_builtins();
    let mut funcs: Vec<Box<dyn CostFunctional>> = STAGE_COSTS.iter().map(|n| registry.build(n)).collect::<Result<_, _>>()?;
    let objective = env.objective()?;
    if objective.has_stage_form() && !STAGE_COSTS.contains(&objective.name().as_str()) {
        funcs.push(registry.build(&env.cfg.objective)?);
    }
    let base = env.spec.log_base;
    let root = dsaht::JointBelief::uniform(env.spec.m1, env.spec.m2);
    let candidates = env.actions.clone().unwrap_or_else(|| all_joint_actions(&env.spec));
    let root_actions = candidates
        .into_iter()
        .map(|e| CostRow {
            action_index: e.index(&env.spec),
            costs: funcs.iter().map(|c| c.stage_cost(&root, &e, &ch, base)).collect(),
            action: e,
        })
        .collect();

    let policy = env.policy(&env.cfg.policy, &ch, objective.as_ref())?;
    let policy_nodes = policy
        .nodes()
        .iter()
        .filter_map(|node| {
            node.action.as_ref().map(|e| NodeCostRow {
                node: node.id,
                depth: node.depth,
                action_index: e.index(&env.spec),
                costs: funcs.iter().map(|c| c.stage_cost(&node.belief, e, &ch, base)).collect(),
            })
        })
        .collect();
    let telescoping: Vec<TelescopingReport> =
        funcs.iter().map(|c| check_telescoping(&policy, &ch, c.as_ref(), base)).collect::<Result<_, _>>()?;
    // a saturated cost stands in for -inf, so its residual says nothing
    for r in telescoping.iter().filter(|r| r.saturated) {
        log::warn!("{} saturated along the policy; excluded from the telescoping verdict", r.cost);
    }
    let max_residual = telescoping.iter().filter(|r| !r.saturated).map(|r| r.residual).fold(0.0, f64::max);
    let passed = max_residual < DECOMPOSITION_TOLERANCE;
    let report = CostsReport {
        policy_name: env.cfg.policy.clone(),
        cost_names: funcs.iter().map(|c| c.name()).collect(),
        root_actions,
        policy_nodes,
        telescoping,
        tolerance: DECOMPOSITION_TOLERANCE,
        max_residual,
        passed,
    };
    let path = env.write(Command::Costs, report)?;
    if !passed {
        return Err(Failure::Invariant(format!("telescoping residual {max_residual:e} exceeds {DECOMPOSITION_TOLERANCE:e}")));
    }
    Ok(path)
}

#[derive(Serialize)]
struct FixedPointReport {
    objective: String,
    tolerance: f64,
    points: Vec<Vec<f64>>,
    #[serde(flatten)]
    result: FixedPointResult,
}

fn fixed_point(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let grid = env.cfg.grid()?;
    let fp = &env.cfg.fixed_point;
    let result = fixed_point_solve(&env.spec, &ch, cost.as_ref(), env.cfg.fixed_point_mode()?, &grid, fp.tolerance, fp.max_iterations)?;
    if !result.converged {
        log::warn!("fixed point did not converge: residual {:e} after {} sweeps", result.residual, result.iterations);
    }
    let report = FixedPointReport {
        objective: cost.name(),
        tolerance: fp.tolerance,
        points: (0..grid.len()).map(|i| grid.probs(i)).collect(),
        result,
    };
    env.write(Command::FixedPoint, report)
}

#[derive(Serialize)]
struct CapacityEvalReport {
    policy_name: String,
    #[serde(flatten)]
    breakdown: DirectedInfoBreakdown,
}

fn capacity_eval(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let policy = env.policy(&env.cfg.policy, &ch, cost.as_ref())?;
    let breakdown = evaluate_in(&env.spec, &policy, &ch, env.cfg.lambda_weights()?, env.cfg.caps.states)?;
    env.write(Command::CapacityEval, CapacityEvalReport { policy_name: env.cfg.policy.clone(), breakdown })
}

fn capacity_search(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let result: SearchResult =
        search_cn_lambda(&env.spec, &ch, env.cfg.horizon, env.cfg.lambda_weights()?, env.actions.as_deref(), env.cfg.caps.policies)?;
    env.write(Command::CapacitySearch, result)
}

#[derive(Serialize)]
struct SweepReport {
    bound_type: &'static str,
    rows: Vec<SweepRow>,
}

fn sweep(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let lambdas: Vec<LambdaWeights> = env.cfg.lambdas.iter().map(|&[l1, l2, l3]| LambdaWeights { l1, l2, l3 }).collect();
    let rows = lambda_sweep(&env.spec, &ch, env.cfg.horizon, &lambdas, env.actions.as_deref(), env.cfg.caps.policies);
    if env.cfg.output.csv {
        let csv_rows: Vec<CsvRow> = rows
            .iter()
            .map(|r| CsvRow {
                lambda: [r.lambda.l1, r.lambda.l2, r.lambda.l3],
                values: match (r.value, r.i1, r.i2, r.i3) {
                    (Some(v), Some(a), Some(b), Some(c)) => Some([v, a, b, c]),
                    _ => None,
                },
            })
            .collect();
        write_atomic(&env.cfg.output.dir.join("lambda_sweep.csv"), &sweep_csv(&csv_rows)?)?;
    }
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        log::warn!("sweep row {:?} failed: {}", r.lambda, r.error.as_deref().unwrap_or(""));
    }
    let all_failed = !rows.is_empty() && failed.len() == rows.len();
    let first_error = failed.first().and_then(|r| r.error.clone());
    let path = env.write(Command::LambdaSweep, SweepReport { bound_type: dsaht::capacity::STRUCTURED_LOWER_BOUND, rows })?;
    match first_error {
        Some(e) if all_failed && e.starts_with("budget exceeded") => Err(Failure::Budget(e)),
        Some(e) if all_failed => Err(Failure::Validation(e)),
        _ => Ok(path),
    }
}

#[derive(Serialize)]
struct CheckSummary {
    name: &'static str,
    max_deviation: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct PolicyFactorization {
    policy: String,
    report: FactorizationReport,
}

#[derive(Serialize)]
struct PolicyDecomposition {
    policy: String,
    stage_form: DirectedInfoBreakdown,
    max_difference: f64,
}

#[derive(Serialize)]
struct InvariantsReport {
    checks: Vec<CheckSummary>,
    policies: Vec<String>,
    posterior_recursion: IndependenceReport,
    input_factorization: Vec<PolicyFactorization>,
    stage_decomposition: Vec<PolicyDecomposition>,
    kernel_independence: KernelReport,
}

fn check_invariants(env: &Env) -> Result<PathBuf, Failure> {
    let ch = env.channel()?;
    let cost = env.objective()?;
    let caps = &env.cfg.caps;
    let lambda = env.cfg.lambda_weights()?;
    let mut names = vec!["dp-optimal".to_string(), "identity".to_string(), format!("hashed({})", env.cfg.seed)];
    if !names.contains(&env.cfg.policy) {
        names.push(env.cfg.policy.clone());
    }
    let policies: Vec<PolicyTree> = names.iter().map(|n| env.policy(n, &ch, cost.as_ref())).collect::<Result<_, _>>()?;

    let posterior = check_policy_independence(&env.spec, &ch, env.cfg.horizon, env.actions.as_deref(), caps.histories)?;
    let factorization: Vec<PolicyFactorization> = names
        .iter()
        .zip(&policies)
        .map(|(n, p)| Ok(PolicyFactorization { policy: n.clone(), report: check_factorization(&env.spec, p, &ch, caps.histories)? }))
        .collect::<Result<_, Failure>>()?;
    let decomposition: Vec<PolicyDecomposition> = names
        .iter()
        .zip(&policies)
        .map(|(n, p)| {
            let stage = evaluate_in(&env.spec, p, &ch, lambda, caps.states)?;
            let full = full_history_in(&env.spec, p, &ch, lambda, caps.histories)?;
            Ok(PolicyDecomposition { policy: n.clone(), max_difference: stage.max_difference(&full), stage_form: stage })
        })
        .collect::<Result<_, Failure>>()?;
    let refs: Vec<&PolicyTree> = policies.iter().collect();
    let kernel = check_kernel_independence(&env.spec, &refs, &ch, caps.histories)?;

    let summary = |name, max_deviation: f64, tolerance| CheckSummary { name, max_deviation, tolerance, passed: max_deviation < tolerance };
    let checks = vec![
        summary("posterior_recursion", posterior.max_deviation, EXACT_TOLERANCE),
        summary(
            "input_factorization",
            factorization.iter().map(|f| f.report.max_deviation).fold(0.0, f64::max),
            EXACT_TOLERANCE,
        ),
        summary(
            "stage_decomposition",
            decomposition.iter().map(|d| d.max_difference).fold(0.0, f64::max),
            DECOMPOSITION_TOLERANCE,
        ),
        summary("kernel_independence", kernel.max_deviation, EXACT_TOLERANCE),
    ];
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({:e})", c.name, c.max_deviation)).collect();
    let report = InvariantsReport {
        checks,
        policies: names,
        posterior_recursion: posterior,
        input_factorization: factorization,
        stage_decomposition: decomposition,
        kernel_independence: kernel,
    };
    let path = env.write(Command::CheckInvariants, report)?;
    if !failed.is_empty() {
        return Err(Failure::Invariant(failed.join(", ")));
    }
    Ok(path)
}
