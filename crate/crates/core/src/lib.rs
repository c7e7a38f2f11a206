//! Inverse portfolio optimization: recover an investor's risk aversion,
//! turnover aversion and ESG weight from observed portfolio choices.

pub mod error;
pub mod forward;
pub mod harness;
pub mod ingest;
pub mod inverse;
pub mod linalg;
pub mod model;
pub mod regret;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use forward::{
    interior_solution, kkt_certificate, project_simplex, solve_forward, solve_forward_nonlinear,
    solve_forward_robust, solve_forward_warm, utility, ForwardSolution,
};
pub use model::*;
