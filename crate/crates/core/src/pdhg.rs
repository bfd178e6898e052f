//! The PDHG iteration for the LP saddle point, the adaptive step-size rule,
//! and the step-size weighted running average.
//!
//! With `tau = eta / omega` and `sigma = omega * eta` one step reads
//!
//! ```text
//! x' = proj_X(x - tau (c - A^T y))
//! y' = y - sigma A(2x' - x) - sigma proj_[-u_c, -l_c](y / sigma - A(2x' - x))
//! ```
//!
//! The step size is accepted when
//! `eta <= ||z' - z||_omega^2 / (2 (y' - y)^T A (x' - x))`.

use crate::error::SolverError;
use crate::linalg::Sharder;
use crate::problem::{LpProblem, PrimalDualIterate};

/// Retry cap for one adaptive step.
pub const MAX_STEP_ATTEMPTS: usize = 60;

/// Step size, primal weight and iteration counters of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    /// Step size used by the last accepted step.
    pub eta: f64,
    /// Tentative step size for the next step.
    pub eta_hat: f64,
    pub omega: f64,
    pub total_iterations: u64,
    pub outer_index: u64,
    pub inner_index: u64,
}

impl StepState {
    pub fn new(eta_hat: f64, omega: f64) -> Self {
        Self { eta: eta_hat, eta_hat, omega, total_iterations: 0, outer_index: 0, inner_index: 0 }
    }

    pub fn tau(&self) -> f64 {
        self.eta / self.omega
    }

    pub fn sigma(&self) -> f64 {
        self.eta * self.omega
    }
}

/// Running sum `sum_i eta_i z_i` and `sum_i eta_i` since the last restart.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageState {
    x_sum: Vec<f64>,
    y_sum: Vec<f64>,
    weight_total: f64,
}

impl AverageState {
    pub fn new(n: usize, m: usize) -> Self {
        Self { x_sum: vec![0.0; n], y_sum: vec![0.0; m], weight_total: 0.0 }
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    pub fn is_empty(&self) -> bool {
        self.weight_total <= 0.0
    }

    pub fn reset(&mut self) {
        self.x_sum.iter_mut().for_each(|v| *v = 0.0);
        self.y_sum.iter_mut().for_each(|v| *v = 0.0);
        self.weight_total = 0.0;
    }

    pub fn add(&mut self, z: &PrimalDualIterate, weight: f64) {
        assert!(weight > 0.0, "average weights must be positive");
        for (s, v) in self.x_sum.iter_mut().zip(&z.x) {
            *s += weight * v;
        }
        for (s, v) in self.y_sum.iter_mut().zip(&z.y) {
            *s += weight * v;
        }
        self.weight_total += weight;
    }

    pub(crate) fn add_sharded(&mut self, sharder: &Sharder, x: &[f64], y: &[f64], weight: f64) {
        sharder.map_into(&mut self.x_sum, |r, chunk| {
            for (s, i) in chunk.iter_mut().zip(r) {
                *s += weight * x[i];
            }
        });
        sharder.map_into(&mut self.y_sum, |r, chunk| {
            for (s, i) in chunk.iter_mut().zip(r) {
                *s += weight * y[i];
            }
        });
        self.weight_total += weight;
    }

    /// The weighted average, or `None` when nothing has been accumulated.
    pub fn average(&self) -> Option<PrimalDualIterate> {
        if self.is_empty() {
            return None;
        }
        let inv = 1.0 / self.weight_total;
        Some(PrimalDualIterate {
            x: self.x_sum.iter().map(|v| v * inv).collect(),
            y: self.y_sum.iter().map(|v| v * inv).collect(),
        })
    }
}

/// `1 / max_ij |A_ij|`, or 1 for an all-zero matrix.
pub fn initial_step_size(problem: &LpProblem) -> f64 {
    let max = problem.matrix.max_abs();
    if max > 0.0 {
        1.0 / max
    } else {
        1.0
    }
}

/// `y' in Y` update for one row given `w = y - sigma * (A(2x' - x))_i`.
#[inline]
fn dual_update(w: f64, sigma: f64, lower: f64, upper: f64) -> f64 {
    if upper.is_finite() {
        let t = w + sigma * upper;
        if t < 0.0 {
            return t;
        }
    }
    if lower.is_finite() {
        let t = w + sigma * lower;
        if t > 0.0 {
            return t;
        }
    }
    0.0
}

/// One plain PDHG step with `tau = eta / omega`, `sigma = omega * eta`.
/// Sequential; used as a reference and for fixed-step runs.
pub fn pdhg_step(
    problem: &LpProblem,
    z: &PrimalDualIterate,
    omega: f64,
    eta: f64,
) -> Result<PrimalDualIterate, SolverError> {
    let tau = eta / omega;
    let sigma = eta * omega;
    let aty = problem.matrix.mul_transpose_vec(&z.y);
    let x_new: Vec<f64> = (0..problem.num_vars())
        .map(|j| {
            let v = z.x[j] - tau * (problem.objective[j] - aty[j]);
            v.max(problem.var_lower[j]).min(problem.var_upper[j])
        })
        .collect();
    let extrapolated: Vec<f64> = x_new.iter().zip(&z.x).map(|(a, b)| 2.0 * a - b).collect();
    let a_ext = problem.matrix.mul_vec(&extrapolated);
    let y_new: Vec<f64> = (0..problem.num_cons())
        .map(|i| {
            let w = z.y[i] - sigma * a_ext[i];
            dual_update(w, sigma, problem.con_lower[i], problem.con_upper[i])
        })
        .collect();
    let out = PrimalDualIterate::new(x_new, y_new);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(SolverError::Numerical("non-finite PDHG iterate".into()))
    }
}

/// Largest step size the acceptance test admits for a trial move,
/// `||dz||_omega^2 / (2 |dy^T A dx|)`, `+inf` when the interaction vanishes.
///
/// With `y' = y - sigma A(2x' - x) - ...` the interaction is typically
/// negative, so the magnitude is what bounds the step.
pub fn step_size_limit(movement_sq_omega: f64, interaction: f64) -> f64 {
    let interaction = interaction.abs();
    if interaction > 0.0 {
        movement_sq_omega / (2.0 * interaction)
    } else {
        f64::INFINITY
    }
}

/// Next tentative step size,
/// `min((1 - (k+1)^-0.3) eta_bar, (1 + (k+1)^-0.6) eta)`, with `k` replaced
/// by `max(k, 1)` so the first call does not produce a zero step.
pub fn next_step_size(eta: f64, eta_bar: f64, k: u64) -> f64 {
    let kp1 = (k.max(1) + 1) as f64;
    let shrink = (1.0 - kp1.powf(-0.3)) * eta_bar;
    let grow = (1.0 + kp1.powf(-0.6)) * eta;
    shrink.min(grow)
}

/// Result of one accepted adaptive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub eta_used: f64,
    pub eta_next: f64,
    /// `eta_bar` of the accepted trial.
    pub eta_bar: f64,
    /// Smallest `eta_bar` computed over all trials of this step.
    pub min_eta_bar: f64,
    pub attempts: usize,
}

/// Working vectors for the PDHG iteration on one problem. The current point
/// and its two matrix products are cached; trials write into separate buffers
/// and only [`Stepper::accept`] swaps them in.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) ax: Vec<f64>,
    pub(crate) aty: Vec<f64>,
    x_trial: Vec<f64>,
    y_trial: Vec<f64>,
    ax_trial: Vec<f64>,
    aty_trial: Vec<f64>,
    /// `x' - x` and `y' - y` of the last accepted step.
    pub(crate) dx: Vec<f64>,
    pub(crate) dy: Vec<f64>,
}

impl Stepper {
    pub fn new(problem: &LpProblem, sharder: &Sharder, start: &PrimalDualIterate) -> Self {
        let (m, n) = (problem.num_cons(), problem.num_vars());
        assert_eq!(start.x.len(), n);
        assert_eq!(start.y.len(), m);
        let mut s = Self {
            x: start.x.clone(),
            y: start.y.clone(),
            ax: vec![0.0; m],
            aty: vec![0.0; n],
            x_trial: vec![0.0; n],
            y_trial: vec![0.0; m],
            ax_trial: vec![0.0; m],
            aty_trial: vec![0.0; n],
            dx: vec![0.0; n],
            dy: vec![0.0; m],
        };
        s.refresh_products(problem, sharder);
        s
    }

    pub fn current(&self) -> PrimalDualIterate {
        PrimalDualIterate::new(self.x.clone(), self.y.clone())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Replaces the current point (restart) and recomputes its products.
    pub fn reset_to(&mut self, problem: &LpProblem, sharder: &Sharder, z: &PrimalDualIterate) {
        self.x.copy_from_slice(&z.x);
        self.y.copy_from_slice(&z.y);
        self.dx.iter_mut().for_each(|v| *v = 0.0);
        self.dy.iter_mut().for_each(|v| *v = 0.0);
        self.refresh_products(problem, sharder);
    }

    fn refresh_products(&mut self, problem: &LpProblem, sharder: &Sharder) {
        sharder.spmv(&problem.matrix, &self.x, &mut self.ax);
        sharder.spmv_transpose(&problem.matrix, &self.y, &mut self.aty);
    }

    /// Computes a trial step into the trial buffers and returns
    /// `(||dz||_omega^2, dy^T A dx)`.
    pub fn trial(&mut self, problem: &LpProblem, sharder: &Sharder, eta: f64, omega: f64) -> (f64, f64) {
        let tau = eta / omega;
        let sigma = eta * omega;
        let (c, lv, uv) = (&problem.objective, &problem.var_lower, &problem.var_upper);
        let (x, aty) = (&self.x, &self.aty);
        let dx_sq = sharder.map_reduce_into(&mut self.x_trial, |r, chunk| {
            let mut acc = 0.0;
            for (slot, j) in chunk.iter_mut().zip(r) {
                let v = (x[j] - tau * (c[j] - aty[j])).max(lv[j]).min(uv[j]);
                let d = v - x[j];
                acc += d * d;
                *slot = v;
            }
            acc
        });
        sharder.spmv(&problem.matrix, &self.x_trial, &mut self.ax_trial);
        let (lc, uc) = (&problem.con_lower, &problem.con_upper);
        let (y, ax, ax_trial) = (&self.y, &self.ax, &self.ax_trial);
        let (dy_sq, interaction) = sharder.map_reduce_pair_into(&mut self.y_trial, |r, chunk| {
            let (mut sq, mut inter) = (0.0, 0.0);
            for (slot, i) in chunk.iter_mut().zip(r) {
                let w = y[i] - sigma * (2.0 * ax_trial[i] - ax[i]);
                let v = dual_update(w, sigma, lc[i], uc[i]);
                let d = v - y[i];
                sq += d * d;
                inter += d * (ax_trial[i] - ax[i]);
                *slot = v;
            }
            (sq, inter)
        });
        sharder.spmv_transpose(&problem.matrix, &self.y_trial, &mut self.aty_trial);
        (omega * dx_sq + dy_sq / omega, interaction)
    }

    /// Makes the last trial the current point.
    pub fn accept(&mut self, sharder: &Sharder) {
        let (x, xt) = (&self.x, &self.x_trial);
        sharder.map_into(&mut self.dx, |r, chunk| {
            for (slot, j) in chunk.iter_mut().zip(r) {
                *slot = xt[j] - x[j];
            }
        });
        let (y, yt) = (&self.y, &self.y_trial);
        sharder.map_into(&mut self.dy, |r, chunk| {
            for (slot, i) in chunk.iter_mut().zip(r) {
                *slot = yt[i] - y[i];
            }
        });
        std::mem::swap(&mut self.x, &mut self.x_trial);
        std::mem::swap(&mut self.y, &mut self.y_trial);
        std::mem::swap(&mut self.ax, &mut self.ax_trial);
        std::mem::swap(&mut self.aty, &mut self.aty_trial);
    }

    fn trial_is_finite(&self) -> bool {
        self.x_trial.iter().chain(&self.y_trial).all(|v| v.is_finite())
    }

    /// One adaptive step starting from the tentative size `eta_hat`.
    pub fn adaptive_step(
        &mut self,
        problem: &LpProblem,
        sharder: &Sharder,
        omega: f64,
        eta_hat: f64,
        k: u64,
    ) -> Result<StepOutcome, SolverError> {
        let mut eta = eta_hat;
        let mut min_eta_bar = f64::INFINITY;
        for attempt in 1..=MAX_STEP_ATTEMPTS {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(SolverError::Numerical(format!("invalid step size {eta}")));
            }
            let (movement, interaction) = self.trial(problem, sharder, eta, omega);
            if !movement.is_finite() || !interaction.is_finite() || !self.trial_is_finite() {
                return Err(SolverError::Numerical("non-finite PDHG trial step".into()));
            }
            let eta_bar = step_size_limit(movement, interaction);
            min_eta_bar = min_eta_bar.min(eta_bar);
            let eta_next = next_step_size(eta, eta_bar, k);
            if eta <= eta_bar {
                self.accept(sharder);
                return Ok(StepOutcome { eta_used: eta, eta_next, eta_bar, min_eta_bar, attempts: attempt });
            }
            eta = eta_next;
        }
        Err(SolverError::Numerical(format!(
            "step size search exceeded {MAX_STEP_ATTEMPTS} attempts"
        )))
    }
}

/// One adaptive step from `z` (allocating convenience wrapper).
pub fn adaptive_step(
    problem: &LpProblem,
    z: &PrimalDualIterate,
    omega: f64,
    eta_hat: f64,
    k: u64,
) -> Result<(PrimalDualIterate, StepOutcome), SolverError> {
    let sharder = Sharder::new(problem.num_cons(), problem.num_vars(), 1, 1);
    let mut stepper = Stepper::new(problem, &sharder, z);
    let outcome = stepper.adaptive_step(problem, &sharder, omega, eta_hat, k)?;
    Ok((stepper.current(), outcome))
}
