//! Decentralized sequential active hypothesis testing over a discrete
//! memoryless multiple access channel with noiseless feedback.
//!
//! Two transmitters each hold a message; at every step they pick inputs
//! through encoder functions chosen by a common agent that sees only the
//! channel outputs. The crate solves the common agent's finite-horizon
//! problem on the reachable belief tree, provides exhaustive oracles for
//! small instances, implements entropy-type stage costs with their
//! infinite-horizon fixed points, and evaluates directed-information rates
//! of structured policies.

pub mod capacity;
pub mod channels;
pub mod descriptor;
pub mod dp;
pub mod error;
pub mod exact;
pub mod info;
pub mod model;
pub mod objective;

pub use error::{Error, Result};
pub use info::LogBase;
pub use model::{
    belief_update, induced_input_marginal, ml_decode, observation_prob, private_belief_update, terminal_cost,
    validate_channel, Channel, EncoderFunction, JointAction, JointBelief, PrivateBelief, ProblemSpec, User,
};
