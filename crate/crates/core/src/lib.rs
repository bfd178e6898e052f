//! Restarted primal-dual hybrid gradient solver for linear programs.

pub mod convergence;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod mps;
pub mod output;
pub mod pdhg;
pub mod polish;
pub mod problem;
pub mod restart;
pub mod scaling;
pub mod solver;
pub mod sparse;

pub use error::SolverError;
pub use problem::{LpProblem, PrimalDualIterate};
pub use sparse::SparseMatrix;
