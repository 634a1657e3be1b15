//! Dense-kernel revised simplex for small and medium linear programs.
//!
//! The solver returns exact basic duals, which callers use as shadow
//! prices. Every optimal result carries a verified certificate: primal
//! feasibility, complementary slackness and primal/dual objective
//! agreement are recomputed after the final refactorization and a failure
//! is reported as [`LpError::NumericalBreakdown`].

mod factor;
pub mod mps;
pub mod problem;
pub mod simplex;
pub mod solution;

pub use problem::{LpProblem, Row, RowId, VarId};
pub use simplex::{solve, solve_with, SolverOptions};
pub use solution::{DualityCheck, LpSolution, LpStatus};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}
