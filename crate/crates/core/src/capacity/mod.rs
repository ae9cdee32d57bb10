//! Directed-information rewards of structured policies and the search for
//! the weighted sum-rate bound `Cₙ(λ)`.

mod directed;
mod history;
mod kernel;
mod search;
mod stage;

pub use directed::{evaluate_in, DirectedInfoBreakdown, LambdaWeights, DEFAULT_STATE_CAP, STRUCTURED_LOWER_BOUND};
pub use history::{
    check_factorization, check_kernel_independence, full_history_in, message_information, FactorizationReport, KernelReport,
    DEFAULT_HISTORY_CAP,
};
pub use kernel::{joint_kernel_step, JointState};
pub use search::{lambda_sweep, layer_sizes, policy_count_bound, search_cn_lambda, SearchResult, SweepRow, DEFAULT_POLICY_CAP};
pub use stage::{h0, h1, h2, h3, stage_rewards, StageRewards, NEGATIVE_INFORMATION_TOLERANCE};
