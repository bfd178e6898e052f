//! Feasibility polishing, plus the fixed-frequency restarted feasibility
//! method used to check contraction on `Ax = b, x >= 0`.

use log::info;

use crate::convergence::{check_termination, ReducedCostMode};
use crate::error::SolverError;
use crate::linalg::Sharder;
use crate::problem::{LpProblem, PrimalDualIterate};
use crate::scaling::RescalingInfo;
use crate::solver::{run_engine, RunMode, RunStatus, SolveStatistics, Workspace};
use crate::sparse::SparseMatrix;

/// Doubling schedule of polishing attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolishingSchedule {
    pub next_trigger: u64,
    pub budget_divisor: u64,
}

impl Default for PolishingSchedule {
    fn default() -> Self {
        Self { next_trigger: 100, budget_divisor: 8 }
    }
}

impl PolishingSchedule {
    pub fn advance(&mut self) {
        self.next_trigger *= 2;
    }

    /// Iteration budget of each feasibility solve triggered at `k`.
    pub fn budget(&self, k: u64) -> u64 {
        k / self.budget_divisor
    }

    /// First `count` trigger iterations.
    pub fn triggers(count: usize) -> Vec<u64> {
        let mut s = Self::default();
        (0..count)
            .map(|_| {
                let k = s.next_trigger;
                s.advance();
                k
            })
            .collect()
    }
}

/// Feasibility subproblems of one solve, built once and reused.
pub(crate) struct PolishContext {
    primal_scaled: LpProblem,
    primal_original: LpProblem,
    dual_scaled: LpProblem,
    dual_original: LpProblem,
    dual_info: RescalingInfo,
    dual_sharder: Sharder,
}

impl PolishContext {
    pub fn new(ws: &Workspace<'_>) -> Self {
        Self {
            primal_scaled: ws.scaled.primal_feasibility().problem,
            primal_original: ws.original.primal_feasibility().problem,
            // The scaled parent's dual subproblem equals the original one
            // scaled by the transposed divisors.
            dual_scaled: ws.scaled.dual_feasibility().problem,
            dual_original: ws.original.dual_feasibility().problem,
            dual_info: ws.info.transposed(),
            dual_sharder: ws.sharder.transposed(),
        }
    }
}

/// One polishing attempt from the window average `window` (scaled units).
/// Returns the stitched point when it meets the termination criteria.
pub(crate) fn polish_attempt(
    ws: &Workspace<'_>,
    ctx: &PolishContext,
    window: &PrimalDualIterate,
    omega: f64,
    eta_hat: f64,
    k: u64,
    stats: &mut SolveStatistics,
) -> Option<PrimalDualIterate> {
    stats.polish_attempts += 1;
    let schedule = PolishingSchedule::default();
    let budget = schedule.budget(k);
    let (m, n) = (ws.scaled.num_cons(), ws.scaled.num_vars());

    let primal_ws = Workspace {
        scaled: &ctx.primal_scaled,
        original: &ctx.primal_original,
        info: ws.info,
        sharder: ws.sharder,
        options: ws.options,
        deadline: ws.deadline,
        started: ws.started,
    };
    let start = PrimalDualIterate::new(window.x.clone(), vec![0.0; m]);
    let mode = RunMode::Feasibility { budget, tolerance: ws.options.eps_primal };
    let primal = run_engine(&primal_ws, &start, omega, eta_hat, mode, stats);
    let primal_ok = matches!(primal.status, RunStatus::Feasible);
    info!("phase=polish k={k} step=primal iterations={} feasible={primal_ok}", primal.iterations);
    if !primal_ok {
        return None;
    }

    let dual_ws = Workspace {
        scaled: &ctx.dual_scaled,
        original: &ctx.dual_original,
        info: &ctx.dual_info,
        sharder: &ctx.dual_sharder,
        options: ws.options,
        deadline: ws.deadline,
        started: ws.started,
    };
    let start = PrimalDualIterate::new(window.y.clone(), vec![0.0; n]);
    let mode = RunMode::Feasibility { budget, tolerance: ws.options.eps_dual };
    let dual = run_engine(&dual_ws, &start, 1.0 / omega, eta_hat, mode, stats);
    let dual_ok = matches!(dual.status, RunStatus::Feasible);
    info!("phase=polish k={k} step=dual iterations={} feasible={dual_ok}", dual.iterations);
    if !dual_ok {
        return None;
    }

    let stitched = PrimalDualIterate::new(primal.point.x, dual.point.x);
    let eval = ws.evaluate(&stitched, ReducedCostMode::Natural);
    let ok = check_termination(&eval.summary, &ws.options.tolerances()).is_some();
    info!(
        "phase=polish k={k} step=check primal_res={:.3e} dual_res={:.3e} rel_gap={:.3e} success={ok}",
        eval.summary.primal_inf_norm, eval.summary.dual_inf_norm, eval.summary.rel_gap
    );
    if ok {
        stats.polish_successes += 1;
        Some(stitched)
    } else {
        None
    }
}

/// Per-restart record of the fixed-frequency method.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRestartTrace {
    /// Restart points `x^{n,0}`, starting with `x^{0,0}`.
    pub points: Vec<Vec<f64>>,
    /// `||A x^{n,0} - b||_2` for every restart point.
    pub residuals: Vec<f64>,
}

/// PDHG with `c = 0`, step `eta` in both spaces, restarted every `restart_length`
/// iterations to the running average with `y` reset to zero.
pub fn fixed_restart_feasibility(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    eta: f64,
    restart_length: usize,
    restarts: usize,
) -> Result<FixedRestartTrace, SolverError> {
    assert_eq!(a.nrows(), b.len());
    assert_eq!(a.ncols(), x0.len());
    assert!(restart_length >= 1);
    let residual = |x: &[f64]| -> f64 {
        a.mul_vec(x).iter().zip(b).map(|(ax, b)| (ax - b) * (ax - b)).sum::<f64>().sqrt()
    };
    let mut x = x0.to_vec();
    let mut trace = FixedRestartTrace { points: vec![x.clone()], residuals: vec![residual(&x)] };
    let (m, n) = (a.nrows(), a.ncols());
    for _ in 0..restarts {
        let mut y = vec![0.0; m];
        let mut ax = a.mul_vec(&x);
        let mut sum = vec![0.0; n];
        for _ in 0..restart_length {
            let aty = a.mul_transpose_vec(&y);
            let x_new: Vec<f64> = x.iter().zip(&aty).map(|(x, g)| (x + eta * g).max(0.0)).collect();
            let ax_new = a.mul_vec(&x_new);
            for i in 0..m {
                y[i] += eta * (b[i] - (2.0 * ax_new[i] - ax[i]));
            }
            x = x_new;
            ax = ax_new;
            for (s, v) in sum.iter_mut().zip(&x) {
                *s += v;
            }
        }
        x = sum.iter().map(|s| s / restart_length as f64).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Numerical("non-finite iterate in fixed-restart method".into()));
        }
        trace.residuals.push(residual(&x));
        trace.points.push(x.clone());
    }
    Ok(trace)
}

/// `q = 4 (1 + eta ||A||) / (1 - eta ||A||)`.
pub fn contraction_constant(eta: f64, norm_a: f64) -> f64 {
    4.0 * (1.0 + eta * norm_a) / (1.0 - eta * norm_a)
}
