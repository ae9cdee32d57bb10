use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("channel row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("channel entry at row {row}, output {z} is {value}, outside [0, 1]")]
    NegativeEntry { row: usize, z: usize, value: f64 },

    #[error("observation z={z} has probability {prob:e} under the current belief and action")]
    ZeroProbabilityObservation { z: usize, prob: f64 },

    #[error("input symbol {x} is not reachable under the private belief and encoder")]
    ZeroProbabilityInput { x: usize },

    #[error("budget exceeded: {what} would reach {count}, cap is {cap}")]
    BudgetExceeded { what: &'static str, count: f64, cap: f64 },

    #[error("policy has no action for a reachable belief at depth {depth}")]
    IncompletePolicy { depth: usize },

    #[error("stage reward {which} = {value:e} is negative; state is inconsistent")]
    NegativeInformation { which: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
