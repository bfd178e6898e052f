//! The outer loop: rescaling, adaptive steps, periodic evaluation of
//! termination, infeasibility and restarts, and feasibility polishing.

use std::time::{Duration, Instant};

use log::{debug, info};

use crate::convergence::{
    check_infeasibility, check_termination, kkt_from_products, primal_violation, reduced_costs_from_products,
    CandidateSource, InfeasibilityCertificate, RayCandidate, ReducedCostMode, ResidualSummary, SolveStatus, Tolerances,
    DEFAULT_EPS_RAY,
};
use crate::error::SolverError;
use crate::linalg::{Sharder, DEFAULT_SHARDS_PER_THREAD};
use crate::pdhg::{initial_step_size, AverageState, Stepper};
use crate::polish::{polish_attempt, PolishContext, PolishingSchedule};
use crate::problem::{LpProblem, PrimalDualIterate};
use crate::restart::{
    initialize_primal_weight, restart_candidate, restart_gap, should_restart, update_primal_weight_from_points,
    CandidateChoice, RestartDecision, RestartLedger, RestartThresholds, DEFAULT_EPS_ZERO,
    DEFAULT_PRIMAL_WEIGHT_SMOOTHING,
};
use crate::scaling::{apply_rescaling_with, RescalingInfo, POCK_CHAMBOLLE_ALPHA, RUIZ_ITERATIONS};

/// Iterations between evaluations of termination, infeasibility and restarts.
pub const EVALUATION_FREQUENCY: u64 = 64;

/// Reduced-cost extraction for reported solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedCostChoice {
    /// Natural with polishing, bound-robust without.
    Auto,
    Natural,
    BoundRobust,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub eps_rel_gap: f64,
    /// Cap on main plus polishing iterations.
    pub iteration_limit: u64,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub threads: usize,
    pub shards_per_thread: usize,
    pub enable_polishing: bool,
    pub enable_scaling: bool,
    pub reduced_cost_mode: ReducedCostChoice,
    pub restart: RestartThresholds,
    pub primal_weight_smoothing: f64,
    pub eps_zero: f64,
    pub eps_ray: f64,
    pub ruiz_iterations: usize,
    pub pock_chambolle_alpha: Option<f64>,
    /// Adaptive restarts; when off the loop never restarts.
    pub enable_restarts: bool,
    /// Primal weight updates at restarts.
    pub enable_primal_weight_updates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_primal: 1e-8,
            eps_dual: 1e-8,
            eps_rel_gap: 1e-2,
            iteration_limit: u64::MAX,
            time_limit: None,
            threads: 1,
            shards_per_thread: DEFAULT_SHARDS_PER_THREAD,
            enable_polishing: true,
            enable_scaling: true,
            reduced_cost_mode: ReducedCostChoice::Auto,
            restart: RestartThresholds::default(),
            primal_weight_smoothing: DEFAULT_PRIMAL_WEIGHT_SMOOTHING,
            eps_zero: DEFAULT_EPS_ZERO,
            eps_ray: DEFAULT_EPS_RAY,
            ruiz_iterations: RUIZ_ITERATIONS,
            pock_chambolle_alpha: Some(POCK_CHAMBOLLE_ALPHA),
            enable_restarts: true,
            enable_primal_weight_updates: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidOptions(msg.to_string()));
        for (name, v) in [("eps_primal", self.eps_primal), ("eps_dual", self.eps_dual), ("eps_rel_gap", self.eps_rel_gap)] {
            if !(v >= 0.0) {
                return bad(&format!("{name} must be nonnegative"));
            }
        }
        if self.iteration_limit == 0 {
            return bad("iteration limit must be positive");
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return bad("time limit must be positive");
            }
        }
        if self.threads == 0 || self.shards_per_thread == 0 {
            return bad("threads and shards per thread must be positive");
        }
        if !(0.0..=1.0).contains(&self.primal_weight_smoothing) {
            return bad("primal weight smoothing must lie in [0, 1]");
        }
        if !(self.eps_zero > 0.0) || !(self.eps_ray > 0.0) {
            return bad("eps_zero and eps_ray must be positive");
        }
        self.restart.validate().map_err(SolverError::InvalidOptions)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { eps_primal: self.eps_primal, eps_dual: self.eps_dual, eps_rel_gap: self.eps_rel_gap }
    }

    pub fn resolved_reduced_cost_mode(&self) -> ReducedCostMode {
        match self.reduced_cost_mode {
            ReducedCostChoice::Natural => ReducedCostMode::Natural,
            ReducedCostChoice::BoundRobust => ReducedCostMode::BoundRobust,
            ReducedCostChoice::Auto if self.enable_polishing => ReducedCostMode::Natural,
            ReducedCostChoice::Auto => ReducedCostMode::BoundRobust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStatistics {
    pub iterations_total: u64,
    pub iterations_main: u64,
    pub iterations_polish: u64,
    pub restarts: u64,
    pub restarts_sufficient: u64,
    pub restarts_necessary: u64,
    pub restarts_artificial: u64,
    pub accepted_steps: u64,
    /// Rejected trial steps.
    pub step_retries: u64,
    /// Accepted steps with `eta > eta_bar`; zero by construction.
    pub step_inequality_violations: u64,
    /// Smallest step-size limit seen in any main-loop trial.
    pub min_eta_bar: f64,
    /// Same for polishing sub-problems, which have their own scaled matrices.
    pub min_eta_bar_polish: f64,
    pub polish_attempts: u64,
    pub polish_successes: u64,
    pub final_primal_weight: f64,
    pub final_step_size: f64,
    pub time_scaling: f64,
    pub time_main: f64,
    pub time_polish: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal, dual and reduced-cost vectors in original units.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    /// Residuals recomputed from `x`, `y`, `r` on the original problem.
    pub residuals: ResidualSummary,
    pub statistics: SolveStatistics,
    pub certificate: Option<InfeasibilityCertificate>,
    /// The problem was a maximization; objectives here are for the negated
    /// (minimization) form.
    pub maximize: bool,
}

impl SolveResult {
    /// Objective values in the sense of the input problem.
    pub fn reported_objectives(&self) -> (f64, f64) {
        let s = if self.maximize { -1.0 } else { 1.0 };
        (s * self.residuals.primal_objective, s * self.residuals.dual_objective)
    }
}

/// Problem data shared by one engine run.
pub(crate) struct Workspace<'a> {
    pub scaled: &'a LpProblem,
    pub original: &'a LpProblem,
    pub info: &'a RescalingInfo,
    pub sharder: &'a Sharder,
    pub options: &'a SolverOptions,
    pub deadline: Option<Instant>,
    pub started: Instant,
}

impl Workspace<'_> {
    pub fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Original-space `x`, `y`, `A x`, `A^T y` of a scaled point.
    fn unscaled_products(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = self.info.unscale_primal(x);
        let y = self.info.unscale_dual(y);
        let mut ax = vec![0.0; self.original.num_cons()];
        let mut aty = vec![0.0; self.original.num_vars()];
        self.sharder.spmv(&self.original.matrix, &x, &mut ax);
        self.sharder.spmv_transpose(&self.original.matrix, &y, &mut aty);
        (x, y, ax, aty)
    }

    /// Residual summary of a scaled point, computed on the original problem.
    pub fn evaluate(&self, z: &PrimalDualIterate, mode: ReducedCostMode) -> Evaluation {
        let (x, y, ax, aty) = self.unscaled_products(&z.x, &z.y);
        let r = reduced_costs_from_products(self.original, &x, &aty, mode);
        let summary = kkt_from_products(self.original, &x, &y, &r, &ax, &aty);
        Evaluation { summary, x, y, r }
    }

    /// Original-space primal violation of a scaled primal point.
    pub fn primal_violation_of(&self, x_scaled: &[f64]) -> f64 {
        let x = self.info.unscale_primal(x_scaled);
        let mut ax = vec![0.0; self.original.num_cons()];
        self.sharder.spmv(&self.original.matrix, &x, &mut ax);
        primal_violation(self.original, &x, &ax)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub summary: ResidualSummary,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
}

/// What an engine run stops on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RunMode {
    /// Full termination criteria, infeasibility detection and polishing.
    Main,
    /// Stop once the original-space primal violation is at most `tolerance`,
    /// or after `budget` iterations.
    Feasibility { budget: u64, tolerance: f64 },
}

#[derive(Debug, Clone)]
pub(crate) enum RunStatus {
    Optimal(Box<Evaluation>),
    Infeasible(InfeasibilityCertificate),
    Feasible,
    BudgetExhausted,
    IterationLimit,
    TimeLimit,
    Numerical(String),
}

#[derive(Debug, Clone)]
pub(crate) struct RunOutcome {
    pub status: RunStatus,
    /// Scaled point to report for this run.
    pub point: PrimalDualIterate,
    pub iterations: u64,
}

fn phase_name(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Main => "main",
        RunMode::Feasibility { .. } => "polish",
    }
}

/// Runs restarted PDHG on `ws.scaled` from `start`.
pub(crate) fn run_engine(
    ws: &Workspace<'_>,
    start: &PrimalDualIterate,
    omega0: f64,
    eta_hat0: f64,
    mode: RunMode,
    stats: &mut SolveStatistics,
) -> RunOutcome {
    let problem = ws.scaled;
    let sharder = ws.sharder;
    let opts = ws.options;
    let tol = opts.tolerances();
    let rc_mode = opts.resolved_reduced_cost_mode();
    let (m, n) = (problem.num_cons(), problem.num_vars());

    let mut omega = omega0;
    let mut eta_hat = eta_hat0;
    let mut stepper = Stepper::new(problem, sharder, start);
    let mut average = AverageState::new(n, m);
    let mut ledger = RestartLedger::new(start.clone());
    let mut polish_schedule = PolishingSchedule::default();
    let mut polish_cache: Option<PolishContext> = None;
    let mut k: u64 = 0;
    let mut t: u64 = 0;
    let mut ax_avg = vec![0.0; m];
    let mut aty_avg = vec![0.0; n];

    let budget = match mode {
        RunMode::Main => u64::MAX,
        RunMode::Feasibility { budget, .. } => budget,
    };

    macro_rules! finish {
        ($status:expr, $point:expr) => {{
            stats.final_primal_weight = omega;
            stats.final_step_size = eta_hat;
            return RunOutcome { status: $status, point: $point, iterations: k };
        }};
    }

    // Pre-loop check.
    match mode {
        RunMode::Main => {
            let eval = ws.evaluate(start, rc_mode);
            if check_termination(&eval.summary, &tol).is_some() {
                finish!(RunStatus::Optimal(Box::new(eval)), start.clone());
            }
        }
        RunMode::Feasibility { tolerance, .. } => {
            if ws.primal_violation_of(&start.x) <= tolerance {
                finish!(RunStatus::Feasible, start.clone());
            }
        }
    }

    loop {
        if stats.iterations_total >= opts.iteration_limit {
            let point = average.average().unwrap_or_else(|| stepper.current());
            finish!(RunStatus::IterationLimit, point);
        }
        let outcome = match stepper.adaptive_step(problem, sharder, omega, eta_hat, k) {
            Ok(o) => o,
            Err(err) => {
                // One recovery attempt: the last finite average or iterate may
                // already satisfy the criteria.
                let fallback = average.average().filter(|z| z.is_finite()).unwrap_or_else(|| stepper.current());
                if fallback.is_finite() {
                    match mode {
                        RunMode::Main => {
                            let eval = ws.evaluate(&fallback, rc_mode);
                            if check_termination(&eval.summary, &tol).is_some() {
                                finish!(RunStatus::Optimal(Box::new(eval)), fallback);
                            }
                        }
                        RunMode::Feasibility { tolerance, .. } => {
                            if ws.primal_violation_of(&fallback.x) <= tolerance {
                                finish!(RunStatus::Feasible, fallback);
                            }
                        }
                    }
                }
                finish!(RunStatus::Numerical(err.to_string()), fallback);
            }
        };
        eta_hat = outcome.eta_next;
        k += 1;
        t += 1;
        stats.iterations_total += 1;
        match mode {
            RunMode::Main => stats.iterations_main += 1,
            RunMode::Feasibility { .. } => stats.iterations_polish += 1,
        }
        stats.accepted_steps += 1;
        stats.step_retries += (outcome.attempts - 1) as u64;
        if outcome.eta_used > outcome.eta_bar {
            stats.step_inequality_violations += 1;
        }
        match mode {
            RunMode::Main => stats.min_eta_bar = stats.min_eta_bar.min(outcome.min_eta_bar),
            RunMode::Feasibility { .. } => {
                stats.min_eta_bar_polish = stats.min_eta_bar_polish.min(outcome.min_eta_bar)
            }
        }
        average.add_sharded(sharder, &stepper.x, &stepper.y, outcome.eta_used);

        // Polishing trigger on its own doubling schedule.
        if mode == RunMode::Main && opts.enable_polishing && k == polish_schedule.next_trigger {
            let window = average.average().unwrap_or_else(|| stepper.current());
            let gap = ws.evaluate(&window, ReducedCostMode::Natural).summary.rel_gap;
            let trigger_k = polish_schedule.next_trigger;
            polish_schedule.advance();
            if gap <= tol.eps_rel_gap {
                let ctx = polish_cache.get_or_insert_with(|| PolishContext::new(ws));
                let polish_start = Instant::now();
                let result = polish_attempt(ws, ctx, &window, omega, eta_hat, trigger_k, stats);
                stats.time_polish += polish_start.elapsed().as_secs_f64();
                if let Some(point) = result {
                    let eval = ws.evaluate(&point, ReducedCostMode::Natural);
                    finish!(RunStatus::Optimal(Box::new(eval)), point);
                }
            }
        }

        let budget_hit = k >= budget;
        if k % EVALUATION_FREQUENCY != 0 && !budget_hit && stats.iterations_total < opts.iteration_limit {
            continue;
        }

        // Evaluation point.
        let current = stepper.current();
        let avg = average.average().unwrap_or_else(|| current.clone());
        sharder.spmv(&problem.matrix, &avg.x, &mut ax_avg);
        sharder.spmv_transpose(&problem.matrix, &avg.y, &mut aty_avg);

        match mode {
            RunMode::Main => {
                let eval_avg = ws.evaluate(&avg, rc_mode);
                let eval_cur = ws.evaluate(&current, rc_mode);
                info!(
                    "phase={} k={} restarts={} primal_res={:.3e} dual_res={:.3e} rel_gap={:.3e} omega={:.4e} eta={:.4e}",
                    phase_name(mode),
                    k,
                    stats.restarts,
                    eval_avg.summary.primal_inf_norm,
                    eval_avg.summary.dual_inf_norm,
                    eval_avg.summary.rel_gap,
                    omega,
                    eta_hat
                );
                if check_termination(&eval_avg.summary, &tol).is_some() {
                    finish!(RunStatus::Optimal(Box::new(eval_avg)), avg);
                }
                if check_termination(&eval_cur.summary, &tol).is_some() {
                    finish!(RunStatus::Optimal(Box::new(eval_cur)), current);
                }
                if let Some(cert) = detect_infeasibility(ws, &stepper, &current, &avg, opts.eps_ray) {
                    finish!(RunStatus::Infeasible(cert), current);
                }
            }
            RunMode::Feasibility { tolerance, .. } => {
                let v_cur = ws.primal_violation_of(&current.x);
                let v_avg = ws.primal_violation_of(&avg.x);
                debug!("phase=polish k={k} violation_current={v_cur:.3e} violation_average={v_avg:.3e}");
                if v_avg <= tolerance {
                    finish!(RunStatus::Feasible, avg);
                }
                if v_cur <= tolerance {
                    finish!(RunStatus::Feasible, current);
                }
                if budget_hit {
                    finish!(RunStatus::BudgetExhausted, current);
                }
            }
        }
        if stats.iterations_total >= opts.iteration_limit {
            finish!(RunStatus::IterationLimit, avg);
        }
        if ws.past_deadline() {
            finish!(RunStatus::TimeLimit, avg);
        }

        if !opts.enable_restarts {
            continue;
        }
        let reference = &ledger.last_restart_point;
        let mu_cur = restart_gap(problem, sharder, &current, &stepper.ax, &stepper.aty, reference, omega);
        let mu_avg = restart_gap(problem, sharder, &avg, &ax_avg, &aty_avg, reference, omega);
        let (candidate, candidate_mu) = match restart_candidate(mu_cur, mu_avg) {
            CandidateChoice::Current => (current, mu_cur),
            CandidateChoice::Average => (avg, mu_avg),
        };
        let decision = should_restart(candidate_mu, &ledger, t, k, &opts.restart);
        debug!(
            "phase={} k={} mu_current={:.3e} mu_average={:.3e} restart={}",
            phase_name(mode),
            k,
            mu_cur,
            mu_avg,
            decision.as_str()
        );
        if decision == RestartDecision::No {
            ledger.previous_candidate_mu = Some(candidate_mu);
            continue;
        }
        stats.restarts += 1;
        match decision {
            RestartDecision::SufficientDecay => stats.restarts_sufficient += 1,
            RestartDecision::NecessaryPlusStall => stats.restarts_necessary += 1,
            RestartDecision::Artificial => stats.restarts_artificial += 1,
            RestartDecision::No => {}
        }
        if opts.enable_primal_weight_updates {
            omega = update_primal_weight_from_points(
                &candidate,
                &ledger.last_restart_point,
                omega,
                opts.primal_weight_smoothing,
                opts.eps_zero,
            );
        }
        stepper.reset_to(problem, sharder, &candidate);
        average.reset();
        t = 0;
        ledger = RestartLedger {
            last_restart_point: candidate,
            mu_at_last_restart: Some(candidate_mu),
            previous_candidate_mu: None,
        };
    }
}

/// Checks the iterate difference, the iterate and the window average as rays,
/// in original units.
fn detect_infeasibility(
    ws: &Workspace<'_>,
    stepper: &Stepper,
    current: &PrimalDualIterate,
    average: &PrimalDualIterate,
    eps_ray: f64,
) -> Option<InfeasibilityCertificate> {
    let diff = ws.unscaled_products(&stepper.dx, &stepper.dy);
    let cur = ws.unscaled_products(&current.x, &current.y);
    let avg = ws.unscaled_products(&average.x, &average.y);
    let candidates: Vec<RayCandidate<'_>> = [
        (CandidateSource::IterateDifference, &diff),
        (CandidateSource::NormalizedIterate, &cur),
        (CandidateSource::NormalizedAverage, &avg),
    ]
    .into_iter()
    .map(|(source, (x, y, ax, aty))| RayCandidate { source, x, y, ax, aty })
    .collect();
    check_infeasibility(ws.original, &candidates, eps_ray)
}

/// Solves `problem` with `options`.
pub fn solve(problem: &LpProblem, options: &SolverOptions) -> Result<SolveResult, SolverError> {
    let started = Instant::now();
    options.validate()?;
    problem.validate()?;
    let (m, n) = (problem.num_cons(), problem.num_vars());
    let sharder = Sharder::new(m, n, options.threads, options.shards_per_thread);
    let mut stats = SolveStatistics {
        min_eta_bar: f64::INFINITY,
        min_eta_bar_polish: f64::INFINITY,
        ..Default::default()
    };

    let scale_start = Instant::now();
    let (scaled, info) = if options.enable_scaling {
        apply_rescaling_with(problem, options.ruiz_iterations, options.pock_chambolle_alpha, &sharder)?
    } else {
        (problem.clone(), RescalingInfo::identity(m, n))
    };
    stats.time_scaling = scale_start.elapsed().as_secs_f64();

    let deadline = options.time_limit.map(|s| started + Duration::from_secs_f64(s));
    let ws = Workspace {
        scaled: &scaled,
        original: problem,
        info: &info,
        sharder: &sharder,
        options,
        deadline,
        started,
    };

    let omega0 = initialize_primal_weight(&scaled, options.eps_zero);
    let eta0 = initial_step_size(&scaled);
    let x0: Vec<f64> = (0..n).map(|j| 0.0f64.max(scaled.var_lower[j]).min(scaled.var_upper[j])).collect();
    let start = PrimalDualIterate::new(x0, vec![0.0; m]);
    info!("phase=setup rows={m} cols={n} nnz={} omega={omega0:.4e} eta={eta0:.4e}", problem.matrix.nnz());

    let main_start = Instant::now();
    let outcome = run_engine(&ws, &start, omega0, eta0, RunMode::Main, &mut stats);
    stats.time_main = main_start.elapsed().as_secs_f64() - stats.time_polish;

    let mode = options.resolved_reduced_cost_mode();
    let (status, eval, certificate) = match outcome.status {
        RunStatus::Optimal(eval) => (SolveStatus::Optimal, *eval, None),
        RunStatus::Infeasible(cert) => {
            let status = match cert.kind {
                crate::convergence::CertificateKind::PrimalInfeasible => SolveStatus::PrimalInfeasible,
                crate::convergence::CertificateKind::DualInfeasible => SolveStatus::DualInfeasible,
            };
            (status, ws.evaluate(&outcome.point, mode), Some(cert))
        }
        RunStatus::IterationLimit | RunStatus::Feasible | RunStatus::BudgetExhausted => {
            (SolveStatus::IterationLimit, ws.evaluate(&outcome.point, mode), None)
        }
        RunStatus::TimeLimit => (SolveStatus::TimeLimit, ws.evaluate(&outcome.point, mode), None),
        RunStatus::Numerical(msg) => {
            info!("phase=end numerical_error=\"{msg}\"");
            (SolveStatus::NumericalError, ws.evaluate(&outcome.point, mode), None)
        }
    };

    // Final residuals straight from the reported vectors.
    let residuals = crate::convergence::kkt_residuals(problem, &eval.x, &eval.y, &eval.r);
    stats.wall_time = started.elapsed().as_secs_f64();
    info!(
        "phase=end status={} iterations={} restarts={} primal_res={:.3e} dual_res={:.3e} rel_gap={:.3e} time={:.3}",
        status,
        stats.iterations_total,
        stats.restarts,
        residuals.primal_inf_norm,
        residuals.dual_inf_norm,
        residuals.rel_gap,
        stats.wall_time
    );
    Ok(SolveResult {
        status,
        x: eval.x,
        y: eval.y,
        r: eval.r,
        residuals,
        statistics: stats,
        certificate,
        maximize: problem.maximize,
    })
}
