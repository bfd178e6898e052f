use thiserror::Error;

use crate::problem::Violation;

/// Errors surfaced by the solver and its input layer.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(#[from] Violation),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}
