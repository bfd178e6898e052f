//! Diagonal preconditioning.
//!
//! The scaled matrix is `A~_ij = A_ij / (row_scale_i * col_scale_j)`, where
//! each pass divides by the square roots of row and column norms. Under this
//! convention the scaled variables relate to the original ones by
//!
//! ```text
//! x = x~ / col_scale     y = y~ / row_scale     r = r~ * col_scale
//! ```
//!
//! and the problem data transform as `c~ = c / col_scale`,
//! `con bounds~ = con bounds / row_scale`, `var bounds~ = var bounds * col_scale`.

use crate::linalg::Sharder;
use crate::problem::{LpProblem, PrimalDualIterate, Violation};
use crate::sparse::{CompressedRows, SparseMatrix};

/// Number of Ruiz passes applied before the Pock-Chambolle pass.
pub const RUIZ_ITERATIONS: usize = 10;
/// Pock-Chambolle exponent.
pub const POCK_CHAMBOLLE_ALPHA: f64 = 1.0;

/// Cumulative diagonal divisors applied to the rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RescalingInfo {
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
}

impl RescalingInfo {
    pub fn identity(m: usize, n: usize) -> Self {
        Self { row_scale: vec![1.0; m], col_scale: vec![1.0; n] }
    }

    /// Scaling of the transposed matrix, i.e. of the dual feasibility problem.
    pub fn transposed(&self) -> Self {
        Self { row_scale: self.col_scale.clone(), col_scale: self.row_scale.clone() }
    }

    pub fn is_identity(&self) -> bool {
        self.row_scale.iter().chain(&self.col_scale).all(|&s| s == 1.0)
    }

    /// Maps a scaled point back to original units.
    pub fn unscale_point(&self, z: &PrimalDualIterate) -> PrimalDualIterate {
        PrimalDualIterate {
            x: self.unscale_primal(&z.x),
            y: self.unscale_dual(&z.y),
        }
    }

    /// Maps an original point into scaled units.
    pub fn scale_point(&self, z: &PrimalDualIterate) -> PrimalDualIterate {
        PrimalDualIterate {
            x: z.x.iter().zip(&self.col_scale).map(|(x, s)| x * s).collect(),
            y: z.y.iter().zip(&self.row_scale).map(|(y, s)| y * s).collect(),
        }
    }

    pub fn unscale_primal(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col_scale).map(|(x, s)| x / s).collect()
    }

    pub fn unscale_dual(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.row_scale).map(|(y, s)| y / s).collect()
    }

    pub fn unscale_reduced_costs(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.col_scale).map(|(r, s)| r * s).collect()
    }

    /// Maps a scaled solution `(z~, r~)` back to original units.
    pub fn unscale_solution(&self, z: &PrimalDualIterate, r: &[f64]) -> (PrimalDualIterate, Vec<f64>) {
        (self.unscale_point(z), self.unscale_reduced_costs(r))
    }
}

fn norm_of(values: &[f64], p: f64) -> f64 {
    if p == f64::INFINITY {
        values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    } else if p == 0.0 {
        values.iter().filter(|v| **v != 0.0).count() as f64
    } else if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `sqrt(||row||_p)` for every row of `layout`, with 1 for all-zero rows.
fn root_norms(layout: &CompressedRows, p: f64, sharder: &Sharder) -> Vec<f64> {
    let mut out = vec![0.0; layout.nrows()];
    let plan = crate::linalg::ShardPlan::with_shards(layout.nrows(), sharder.row_plan().num_shards().max(1));
    sharder.for_each_shard(&plan, &mut out, |range, chunk| {
        for (slot, i) in chunk.iter_mut().zip(range) {
            let norm = norm_of(&layout.values()[layout.row_range(i)], p);
            *slot = if norm > 0.0 { norm.sqrt() } else { 1.0 };
        }
    });
    out
}

fn single_thread(a: &SparseMatrix) -> Sharder {
    Sharder::new(a.nrows(), a.ncols(), 1, 1)
}

/// One Ruiz pass: square roots of the row and column infinity norms.
pub fn ruiz_pass(a: &SparseMatrix) -> (Vec<f64>, Vec<f64>) {
    ruiz_pass_with(a, &single_thread(a))
}

pub fn ruiz_pass_with(a: &SparseMatrix, sharder: &Sharder) -> (Vec<f64>, Vec<f64>) {
    (
        root_norms(a.rows(), f64::INFINITY, sharder),
        root_norms(a.cols(), f64::INFINITY, sharder),
    )
}

/// One Pock-Chambolle pass: `sqrt(||row||_{2-alpha})` and `sqrt(||col||_alpha)`.
pub fn pock_chambolle_pass(a: &SparseMatrix, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    pock_chambolle_pass_with(a, alpha, &single_thread(a))
}

pub fn pock_chambolle_pass_with(a: &SparseMatrix, alpha: f64, sharder: &Sharder) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..=2.0).contains(&alpha), "alpha must lie in [0, 2]");
    (root_norms(a.rows(), 2.0 - alpha, sharder), root_norms(a.cols(), alpha, sharder))
}

/// Ten Ruiz passes followed by one Pock-Chambolle pass.
pub fn apply_rescaling(problem: &LpProblem) -> Result<(LpProblem, RescalingInfo), Violation> {
    apply_rescaling_with(problem, RUIZ_ITERATIONS, Some(POCK_CHAMBOLLE_ALPHA), &single_thread(&problem.matrix))
}

/// Rescaling with an explicit pass count. `pock_chambolle_alpha = None` skips
/// the final pass.
pub fn apply_rescaling_with(
    problem: &LpProblem,
    ruiz_iterations: usize,
    pock_chambolle_alpha: Option<f64>,
    sharder: &Sharder,
) -> Result<(LpProblem, RescalingInfo), Violation> {
    if let Some((row, col, _)) = problem.matrix.triplets().find(|t| !t.2.is_finite()) {
        return Err(Violation::NonFiniteMatrixEntry { row, col });
    }
    let (m, n) = (problem.num_cons(), problem.num_vars());
    let mut info = RescalingInfo::identity(m, n);
    let mut matrix = problem.matrix.clone();

    let mut apply = |matrix: &mut SparseMatrix, rows: Vec<f64>, cols: Vec<f64>| {
        if rows.iter().chain(&cols).all(|&f| f == 1.0) {
            return;
        }
        *matrix = matrix.scaled_by_divisors(&rows, &cols);
        for (acc, f) in info.row_scale.iter_mut().zip(&rows) {
            *acc *= f;
        }
        for (acc, f) in info.col_scale.iter_mut().zip(&cols) {
            *acc *= f;
        }
    };
    for _ in 0..ruiz_iterations {
        let (rows, cols) = ruiz_pass_with(&matrix, sharder);
        apply(&mut matrix, rows, cols);
    }
    if let Some(alpha) = pock_chambolle_alpha {
        let (rows, cols) = pock_chambolle_pass_with(&matrix, alpha, sharder);
        apply(&mut matrix, rows, cols);
    }

    let scaled = scale_problem(problem, matrix, &info);
    Ok((scaled, info))
}

/// Applies `info` to the vectors of `problem`, using `matrix` as the already
/// scaled constraint matrix.
fn scale_problem(problem: &LpProblem, matrix: SparseMatrix, info: &RescalingInfo) -> LpProblem {
    let div = |v: &[f64], s: &[f64]| -> Vec<f64> { v.iter().zip(s).map(|(v, s)| v / s).collect() };
    let mul = |v: &[f64], s: &[f64]| -> Vec<f64> { v.iter().zip(s).map(|(v, s)| v * s).collect() };
    LpProblem {
        matrix,
        objective: div(&problem.objective, &info.col_scale),
        objective_offset: problem.objective_offset,
        con_lower: div(&problem.con_lower, &info.row_scale),
        con_upper: div(&problem.con_upper, &info.row_scale),
        var_lower: mul(&problem.var_lower, &info.col_scale),
        var_upper: mul(&problem.var_upper, &info.col_scale),
        maximize: problem.maximize,
        name: problem.name.clone(),
        var_names: problem.var_names.clone(),
        con_names: problem.con_names.clone(),
    }
}

/// Scales `problem` by an existing `info` (used to rebuild a scaled problem
/// without rerunning the passes).
pub fn rescale_with(problem: &LpProblem, info: &RescalingInfo) -> LpProblem {
    let matrix = problem.matrix.scaled_by_divisors(&info.row_scale, &info.col_scale);
    scale_problem(problem, matrix, info)
}
