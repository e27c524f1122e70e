use thiserror::Error;

use crate::irl::IrlSolution;

/// Errors raised by the numerical kernels, the Riccati solvers and the
/// learning loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains a non-finite entry")]
    NonFiniteEntry,

    #[error("matrix is singular to working precision (pivot {pivot:e})")]
    SingularMatrix { pivot: f64 },

    #[error("least-squares system is rank deficient (|r_{index}{index}| = {diagonal:e})")]
    RankDeficient { index: usize, diagonal: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("state became non-finite or left the admissible region")]
    NonFiniteState,

    #[error("pair (A, B) is not controllable (|det C| = {determinant:e})")]
    NotControllable { determinant: f64 },

    #[error("initial gain does not stabilize the closed loop")]
    NotStabilizing,

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("policy iteration hit its iteration cap without meeting the gain tolerance")]
    IrlNoConvergence { last: Box<IrlSolution> },

    #[error("gain synthesis failed: {0}")]
    SolverFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
