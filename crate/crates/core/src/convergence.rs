//! Reduced costs, KKT residuals, termination and infeasibility detection.

use crate::problem::{ext_mul, LpProblem};

/// Default relative tolerance for certificate residuals.
pub const DEFAULT_EPS_RAY: f64 = 1e-12;

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
    TimeLimit,
    NumericalError,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::PrimalInfeasible => "primal-infeasible",
            SolveStatus::DualInfeasible => "dual-infeasible",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::NumericalError => "numerical-error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SolveStatus::Optimal,
            SolveStatus::PrimalInfeasible,
            SolveStatus::DualInfeasible,
            SolveStatus::IterationLimit,
            SolveStatus::TimeLimit,
            SolveStatus::NumericalError,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How reduced costs are extracted from `c - A^T y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedCostMode {
    /// Projection onto the reduced-cost sign set.
    Natural,
    /// Keep a component only when the matching bound is close relative to `|x|`.
    BoundRobust,
}

/// Reduced costs from a precomputed `A^T y`.
pub fn reduced_costs_from_products(problem: &LpProblem, x: &[f64], aty: &[f64], mode: ReducedCostMode) -> Vec<f64> {
    (0..problem.num_vars())
        .map(|j| {
            let g = problem.objective[j] - aty[j];
            match mode {
                ReducedCostMode::Natural => problem.reduced_cost_set(j).project(g),
                ReducedCostMode::BoundRobust => {
                    let near_lower = x[j] - problem.var_lower[j] <= x[j].abs();
                    let near_upper = problem.var_upper[j] - x[j] <= x[j].abs();
                    if (g > 0.0 && near_lower) || (g < 0.0 && near_upper) {
                        g
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect()
}

pub fn recover_reduced_costs(problem: &LpProblem, x: &[f64], y: &[f64], mode: ReducedCostMode) -> Vec<f64> {
    let aty = problem.matrix.mul_transpose_vec(y);
    reduced_costs_from_products(problem, x, &aty, mode)
}

/// Residuals and objectives of a primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSummary {
    pub primal_inf_norm: f64,
    pub dual_inf_norm: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

/// Distance of `v` to `[lo, hi]`.
#[inline]
pub fn interval_violation(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

/// `-p(-v; lo, hi)` summed over coordinates.
fn dual_bound_term(v: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &u))| ext_mul(l, v.max(0.0)) - ext_mul(u, (-v).max(0.0)))
        .sum()
}

/// `|P - D| / max(|P|, |D|)` with 0/0 = 0.
pub fn relative_gap(primal: f64, dual: f64) -> f64 {
    let abs_gap = (primal - dual).abs();
    let denom = primal.abs().max(dual.abs());
    if abs_gap == 0.0 {
        0.0
    } else if denom == 0.0 || !abs_gap.is_finite() {
        f64::INFINITY
    } else {
        abs_gap / denom
    }
}

pub fn primal_violation(problem: &LpProblem, x: &[f64], ax: &[f64]) -> f64 {
    let rows = ax
        .iter()
        .zip(problem.con_lower.iter().zip(&problem.con_upper))
        .map(|(&v, (&l, &u))| interval_violation(v, l, u));
    let cols = x
        .iter()
        .zip(problem.var_lower.iter().zip(&problem.var_upper))
        .map(|(&v, (&l, &u))| interval_violation(v, l, u));
    rows.chain(cols).fold(0.0, f64::max)
}

pub fn dual_violation(problem: &LpProblem, aty: &[f64], r: &[f64]) -> f64 {
    (0..problem.num_vars())
        .map(|j| (problem.objective[j] - aty[j] - r[j]).abs())
        .fold(0.0, f64::max)
}

/// KKT residuals from precomputed `A x` and `A^T y`.
pub fn kkt_from_products(problem: &LpProblem, x: &[f64], y: &[f64], r: &[f64], ax: &[f64], aty: &[f64]) -> ResidualSummary {
    let cx: f64 = problem.objective.iter().zip(x).map(|(c, x)| c * x).sum();
    let primal_objective = cx + problem.objective_offset;
    let dual_objective = dual_bound_term(y, &problem.con_lower, &problem.con_upper)
        + dual_bound_term(r, &problem.var_lower, &problem.var_upper)
        + problem.objective_offset;
    let abs_gap = (primal_objective - dual_objective).abs();
    ResidualSummary {
        primal_inf_norm: primal_violation(problem, x, ax),
        dual_inf_norm: dual_violation(problem, aty, r),
        primal_objective,
        dual_objective,
        abs_gap,
        rel_gap: relative_gap(primal_objective, dual_objective),
    }
}

pub fn kkt_residuals(problem: &LpProblem, x: &[f64], y: &[f64], r: &[f64]) -> ResidualSummary {
    let ax = problem.matrix.mul_vec(x);
    let aty = problem.matrix.mul_transpose_vec(y);
    kkt_from_products(problem, x, y, r, &ax, &aty)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub eps_rel_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eps_primal: 1e-8, eps_dual: 1e-8, eps_rel_gap: 1e-2 }
    }
}

pub fn check_termination(summary: &ResidualSummary, tol: &Tolerances) -> Option<SolveStatus> {
    let ok = summary.primal_inf_norm <= tol.eps_primal
        && summary.dual_inf_norm <= tol.eps_dual
        && summary.rel_gap <= tol.eps_rel_gap;
    ok.then_some(SolveStatus::Optimal)
}

/// Which sequence produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    IterateDifference,
    NormalizedIterate,
    NormalizedAverage,
}

impl CandidateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateSource::IterateDifference => "iterate-difference",
            CandidateSource::NormalizedIterate => "normalized-iterate",
            CandidateSource::NormalizedAverage => "normalized-average",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Dual ray `(y, r)`: the constraints admit no solution.
    PrimalInfeasible,
    /// Primal ray `x`: the objective is unbounded below.
    DualInfeasible,
}

impl CertificateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateKind::PrimalInfeasible => "primal-infeasible",
            CertificateKind::DualInfeasible => "dual-infeasible",
        }
    }
}

/// An approximate infeasibility certificate, scaled to unit infinity norm.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub kind: CertificateKind,
    pub source: CandidateSource,
    /// Primal ray (empty for dual rays).
    pub x: Vec<f64>,
    /// Dual ray and its reduced costs (empty for primal rays).
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    /// Infinity norm of the homogeneous residual.
    pub residual: f64,
    /// Dual-ray objective (positive) or `c^T x` (negative).
    pub objective: f64,
}

/// A candidate ray in original units, with its matrix products.
#[derive(Debug, Clone, Copy)]
pub struct RayCandidate<'a> {
    pub source: CandidateSource,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub ax: &'a [f64],
    pub aty: &'a [f64],
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn finite_inf_norm(v: &[f64]) -> f64 {
    v.iter().filter(|x| x.is_finite()).fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Projection onto the recession cone of `[lo, hi]`.
fn recession_project(v: f64, lo: f64, hi: f64) -> f64 {
    let v = if lo.is_finite() { v.max(0.0) } else { v };
    if hi.is_finite() {
        v.min(0.0)
    } else {
        v
    }
}

fn recession_violation(v: f64, lo: f64, hi: f64) -> f64 {
    (v - recession_project(v, lo, hi)).abs()
}

/// Tests `y` (with `A^T y`) as a dual ray. `y` is projected onto `Y` first.
pub fn check_dual_ray(problem: &LpProblem, y_in: &[f64], aty: &[f64], eps_ray: f64) -> Option<(Vec<f64>, Vec<f64>, f64, f64)> {
    let y: Vec<f64> = y_in.iter().enumerate().map(|(i, &v)| problem.dual_set(i).project(v)).collect();
    let scale = inf_norm(&y);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let aty_owned;
    let aty = if y != y_in {
        aty_owned = problem.matrix.mul_transpose_vec(&y);
        &aty_owned[..]
    } else {
        aty
    };
    let r: Vec<f64> = (0..problem.num_vars()).map(|j| problem.reduced_cost_set(j).project(-aty[j])).collect();
    let residual = aty.iter().zip(&r).map(|(a, r)| (a + r).abs()).fold(0.0, f64::max);
    let objective =
        dual_bound_term(&y, &problem.con_lower, &problem.con_upper) + dual_bound_term(&r, &problem.var_lower, &problem.var_upper);
    let bound_scale = 1.0
        + finite_inf_norm(&problem.con_lower)
            .max(finite_inf_norm(&problem.con_upper))
            .max(finite_inf_norm(&problem.var_lower))
            .max(finite_inf_norm(&problem.var_upper));
    if residual <= eps_ray * scale && objective > eps_ray * scale * bound_scale {
        let inv = 1.0 / scale;
        Some((
            y.iter().map(|v| v * inv).collect(),
            r.iter().map(|v| v * inv).collect(),
            residual * inv,
            objective * inv,
        ))
    } else {
        None
    }
}

/// Tests `x` (with `A x`) as a primal ray. `x` is projected onto the recession
/// cone of the variable bounds first.
pub fn check_primal_ray(problem: &LpProblem, x: &[f64], ax: &[f64], eps_ray: f64) -> Option<(Vec<f64>, f64, f64)> {
    let projected: Vec<f64> = (0..x.len())
        .map(|j| recession_project(x[j], problem.var_lower[j], problem.var_upper[j]))
        .collect();
    let scale = inf_norm(&projected);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let ax_owned;
    let ax = if projected != x {
        ax_owned = problem.matrix.mul_vec(&projected);
        &ax_owned[..]
    } else {
        ax
    };
    let residual = (0..ax.len())
        .map(|i| recession_violation(ax[i], problem.con_lower[i], problem.con_upper[i]))
        .fold(0.0, f64::max);
    let objective: f64 = problem.objective.iter().zip(&projected).map(|(c, x)| c * x).sum();
    let c_scale = 1.0 + inf_norm(&problem.objective);
    if residual <= eps_ray * scale && objective < -eps_ray * scale * c_scale {
        let inv = 1.0 / scale;
        Some((projected.iter().map(|v| v * inv).collect(), residual * inv, objective * inv))
    } else {
        None
    }
}

/// Checks the candidates in order; the first that certifies wins.
pub fn check_infeasibility(problem: &LpProblem, candidates: &[RayCandidate<'_>], eps_ray: f64) -> Option<InfeasibilityCertificate> {
    for cand in candidates {
        if let Some((y, r, residual, objective)) = check_dual_ray(problem, cand.y, cand.aty, eps_ray) {
            return Some(InfeasibilityCertificate {
                kind: CertificateKind::PrimalInfeasible,
                source: cand.source,
                x: Vec::new(),
                y,
                r,
                residual,
                objective,
            });
        }
        if let Some((x, residual, objective)) = check_primal_ray(problem, cand.x, cand.ax, eps_ray) {
            return Some(InfeasibilityCertificate {
                kind: CertificateKind::DualInfeasible,
                source: cand.source,
                x,
                y: Vec::new(),
                r: Vec::new(),
                residual,
                objective,
            });
        }
    }
    None
}

/// Re-verifies a certificate from scratch against `problem`.
pub fn verify_certificate(problem: &LpProblem, cert: &InfeasibilityCertificate, eps_ray: f64) -> bool {
    match cert.kind {
        CertificateKind::PrimalInfeasible => {
            let aty = problem.matrix.mul_transpose_vec(&cert.y);
            let in_y = cert.y.iter().enumerate().all(|(i, &v)| problem.dual_set(i).contains(v));
            in_y && check_dual_ray(problem, &cert.y, &aty, eps_ray).is_some()
        }
        CertificateKind::DualInfeasible => {
            let ax = problem.matrix.mul_vec(&cert.x);
            check_primal_ray(problem, &cert.x, &ax, eps_ray).is_some()
        }
    }
}

/// Whether `r` lies in the reduced-cost sign sets.
pub fn reduced_costs_in_sets(problem: &LpProblem, r: &[f64]) -> bool {
    r.iter().enumerate().all(|(j, &v)| problem.reduced_cost_set(j).contains(v))
}
