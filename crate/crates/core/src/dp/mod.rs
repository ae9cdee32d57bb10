//! Finite-horizon common-agent dynamic program over the reachable belief tree.

mod brute;
mod checks;
mod evaluate;
mod policy;
mod solve;
mod tree;

use serde::Serialize;

pub use brute::{brute_force_unstructured, strategy_count, BruteForceResult, UnstructuredStrategy, DEFAULT_STRATEGY_CAP};
pub use checks::{check_policy_independence, IndependenceReport};
pub(crate) use evaluate::node_masses;
pub use evaluate::{evaluate_policy_cost, evaluate_policy_exact, simulate_monte_carlo, MonteCarloEstimate};
pub use policy::{PolicyContext, PolicyNode, PolicyProvider, PolicyRegistry, PolicyTree};
pub use solve::{backward_dp, DpSolution};
pub use tree::{build_reachable_tree, BeliefTree, Expansion, TreeNode, DEFAULT_NODE_CAP};

/// One observation branch out of a node under a fixed action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Branch {
    pub z: usize,
    pub prob: f64,
    pub child: usize,
}

/// Values closer than this are treated as tied; ties resolve to the lower
/// action index.
pub const TIE_TOLERANCE: f64 = 1e-13;
