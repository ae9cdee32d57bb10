//! Cost functionals, their telescoping identities, and the infinite-horizon
//! solver.

mod costs;
mod fixed_point;
mod telescoping;

pub use costs::{
    cost_conditional_entropy, cost_ejs, cost_joint_entropy, ConditionalEntropyDrift, CostFunctional, CostRegistry, Ejs,
    EjsCost, ErrorProbability, JointEntropyDrift, Weighted, EJS_POINT_MASS_SKIP,
};
pub use fixed_point::{fixed_point_solve, FixedPointMode, FixedPointResult, SimplexGrid, GRID_POINT_CAP};
pub use telescoping::{check_telescoping, TelescopingReport, TELESCOPING_MAX_HORIZON};
