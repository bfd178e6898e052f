//! Normalized duality gap, restart candidate selection, restart criteria and
//! primal weight updates.

use crate::linalg::Sharder;
use crate::problem::{ext_mul, LpProblem, PrimalDualIterate};

/// Default threshold for "small" norms in the primal weight formulas.
pub const DEFAULT_EPS_ZERO: f64 = 1e-12;
/// Default smoothing parameter of the primal weight update.
pub const DEFAULT_PRIMAL_WEIGHT_SMOOTHING: f64 = 0.5;

/// Restart thresholds. Defaults: sufficient 0.1, necessary 0.9, artificial 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartThresholds {
    pub beta_sufficient: f64,
    pub beta_necessary: f64,
    pub beta_artificial: f64,
}

impl Default for RestartThresholds {
    fn default() -> Self {
        Self { beta_sufficient: 0.1, beta_necessary: 0.9, beta_artificial: 0.5 }
    }
}

impl RestartThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.beta_sufficient) && unit(self.beta_necessary) && unit(self.beta_artificial)) {
            return Err("restart thresholds must lie in (0, 1)".into());
        }
        if self.beta_sufficient >= self.beta_necessary {
            return Err("beta_sufficient must be smaller than beta_necessary".into());
        }
        Ok(())
    }
}

/// Why a restart fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartDecision {
    No,
    SufficientDecay,
    NecessaryPlusStall,
    Artificial,
}

impl RestartDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            RestartDecision::No => "none",
            RestartDecision::SufficientDecay => "sufficient",
            RestartDecision::NecessaryPlusStall => "necessary",
            RestartDecision::Artificial => "artificial",
        }
    }
}

/// State carried between restarts of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartLedger {
    pub last_restart_point: PrimalDualIterate,
    /// `mu(z^{n,0}, z^{n-1,0})`; `None` until the first restart happened.
    pub mu_at_last_restart: Option<f64>,
    /// Candidate `mu` from the previous evaluation of this epoch.
    pub previous_candidate_mu: Option<f64>,
}

impl RestartLedger {
    pub fn new(start: PrimalDualIterate) -> Self {
        Self { last_restart_point: start, mu_at_last_restart: None, previous_candidate_mu: None }
    }
}

/// Which point becomes the restart candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateChoice {
    Current,
    Average,
}

/// The current iterate wins only when its gap is strictly smaller.
pub fn restart_candidate(mu_current: f64, mu_average: f64) -> CandidateChoice {
    if mu_current < mu_average {
        CandidateChoice::Current
    } else {
        CandidateChoice::Average
    }
}

/// Evaluates the three restart criteria in order (i), (ii), (iii).
pub fn should_restart(
    candidate_mu: f64,
    ledger: &RestartLedger,
    inner_iterations: u64,
    total_iterations: u64,
    thresholds: &RestartThresholds,
) -> RestartDecision {
    if let Some(last) = ledger.mu_at_last_restart {
        if candidate_mu <= thresholds.beta_sufficient * last {
            return RestartDecision::SufficientDecay;
        }
        if let Some(previous) = ledger.previous_candidate_mu {
            if candidate_mu <= thresholds.beta_necessary * last && candidate_mu > previous {
                return RestartDecision::NecessaryPlusStall;
            }
        }
    }
    if inner_iterations as f64 >= thresholds.beta_artificial * total_iterations as f64 {
        return RestartDecision::Artificial;
    }
    RestartDecision::No
}

/// `max{0, |l|*, |u|*}` per coordinate, where infinite values count as 0.
pub fn combine_bounds(lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let star = |v: f64| if v.is_finite() { v.abs() } else { 0.0 };
    lower.iter().zip(upper).map(|(l, u)| star(*l).max(star(*u))).collect()
}

/// `||c||_2 / ||Combine(l_c, u_c)||_2` when both norms exceed `eps_zero`,
/// else 1.
pub fn initialize_primal_weight(problem: &LpProblem, eps_zero: f64) -> f64 {
    let c_norm = problem.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b_norm = combine_bounds(&problem.con_lower, &problem.con_upper)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if c_norm > eps_zero && b_norm > eps_zero {
        c_norm / b_norm
    } else {
        1.0
    }
}

/// Log-scale exponential smoothing of `Delta_y / Delta_x`.
pub fn update_primal_weight(delta_x: f64, delta_y: f64, omega_prev: f64, theta: f64, eps_zero: f64) -> f64 {
    if delta_x > eps_zero && delta_y > eps_zero {
        (theta * (delta_y / delta_x).ln() + (1.0 - theta) * omega_prev.ln()).exp()
    } else {
        omega_prev
    }
}

/// [`update_primal_weight`] from two restart points.
pub fn update_primal_weight_from_points(
    new_restart: &PrimalDualIterate,
    prev_restart: &PrimalDualIterate,
    omega_prev: f64,
    theta: f64,
    eps_zero: f64,
) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    update_primal_weight(
        dist(&new_restart.x, &prev_restart.x),
        dist(&new_restart.y, &prev_restart.y),
        omega_prev,
        theta,
        eps_zero,
    )
}

/// One coordinate of the trust-region problem after the change of variables
/// that turns the omega-ball into a Euclidean ball. The objective is concave
/// piecewise linear: slope `left` below `kink`, slope `right` above it
/// (`right <= left`), restricted to `[lo, hi]` which contains 0.
#[derive(Debug, Clone, Copy)]
struct Coordinate {
    lo: f64,
    hi: f64,
    kink: f64,
    left: f64,
    right: f64,
}

/// Either a constant position or `slope * t` on a segment of `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Position {
    Fixed(f64),
    Linear(f64),
}

impl Coordinate {
    fn linear(slope: f64, lo: f64, hi: f64) -> Self {
        Self { lo, hi, kink: 0.0, left: slope, right: slope }
    }

    /// Maximizer of `phi(u) - u^2 / (2t)` over `[lo, hi]`.
    fn position(&self, t: f64) -> Position {
        let up = self.right * t;
        let down = self.left * t;
        let inner = if self.kink < up {
            Position::Linear(self.right)
        } else if self.kink > down {
            Position::Linear(self.left)
        } else {
            Position::Fixed(self.kink)
        };
        let value = match inner {
            Position::Fixed(v) => v,
            Position::Linear(s) => s * t,
        };
        if value < self.lo {
            Position::Fixed(self.lo)
        } else if value > self.hi {
            Position::Fixed(self.hi)
        } else {
            inner
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        match self.position(t) {
            Position::Fixed(v) => v,
            Position::Linear(s) => s * t,
        }
    }

    /// Position as `t -> infinity`.
    fn limit(&self) -> f64 {
        let far = |s: f64| {
            if s > 0.0 {
                f64::INFINITY
            } else if s < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        };
        let (up, down) = (far(self.right), far(self.left));
        let inner = self.kink.max(up).min(down);
        inner.max(self.lo).min(self.hi)
    }

    /// `phi(u) - phi(0)`.
    fn gain(&self, u: f64) -> f64 {
        let psi = |v: f64| {
            let slope = if v <= self.kink { self.left } else { self.right };
            slope * (v - self.kink)
        };
        if self.left == self.right {
            self.left * u
        } else {
            psi(u) - psi(0.0)
        }
    }

    /// Values of `t > 0` where the piece in use may change.
    fn breakpoints(&self, out: &mut Vec<f64>) {
        let mut push = |num: f64, den: f64| {
            if den != 0.0 {
                let t = num / den;
                if t.is_finite() && t > 0.0 {
                    out.push(t);
                }
            }
        };
        for s in [self.left, self.right] {
            push(self.kink, s);
            push(self.lo, s);
            push(self.hi, s);
        }
    }
}

fn norm_sq_at(coords: &[Coordinate], t: f64) -> f64 {
    coords.iter().map(|c| c.value_at(t).powi(2)).sum()
}

/// Builds the coordinates of the separable trust-region problem at `z`.
fn coordinates(problem: &LpProblem, x: &[f64], y: &[f64], ax: &[f64], aty: &[f64], omega: f64) -> Vec<Coordinate> {
    let root = omega.sqrt();
    let mut coords = Vec::with_capacity(x.len() + y.len());
    for j in 0..x.len() {
        // Gap is linear in x^ with gradient A^T y - c.
        let g = (aty[j] - problem.objective[j]) / root;
        let lo = (root * (problem.var_lower[j] - x[j])).min(0.0);
        let hi = (root * (problem.var_upper[j] - x[j])).max(0.0);
        coords.push(Coordinate::linear(g, lo, hi));
    }
    for i in 0..y.len() {
        let (l, u) = (problem.con_lower[i], problem.con_upper[i]);
        // In y^: slope l - (Ax)_i above 0, slope u - (Ax)_i below 0.
        let kink = -y[i] / root;
        let coord = match (l.is_finite(), u.is_finite()) {
            (false, false) => Coordinate { lo: 0.0, hi: 0.0, kink: 0.0, left: 0.0, right: 0.0 },
            (false, true) => Coordinate::linear(root * (u - ax[i]), f64::NEG_INFINITY, kink.max(0.0)),
            (true, false) => Coordinate::linear(root * (l - ax[i]), kink.min(0.0), f64::INFINITY),
            (true, true) => Coordinate {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                kink,
                left: root * (u - ax[i]),
                right: root * (l - ax[i]),
            },
        };
        coords.push(coord);
    }
    coords
}

/// Maximum of the Lagrangian gap `L(x, y^) - L(x^, y)` over the omega-ball of
/// radius `radius` around `z` intersected with the feasible box, using
/// precomputed `A x` and `A^T y`. The result is the gap itself, not divided by
/// the radius.
pub fn max_gap_in_ball(
    problem: &LpProblem,
    z: &PrimalDualIterate,
    ax: &[f64],
    aty: &[f64],
    radius: f64,
    omega: f64,
) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    let coords = coordinates(problem, &z.x, &z.y, ax, aty, omega);
    let r2 = radius * radius;

    let limits: Vec<f64> = coords.iter().map(Coordinate::limit).collect();
    let limit_norm: f64 = limits.iter().map(|v| v * v).sum();
    let positions: Vec<f64> = if limit_norm.is_finite() && limit_norm <= r2 {
        limits
    } else {
        let mut breaks = Vec::with_capacity(6 * coords.len());
        for c in &coords {
            c.breakpoints(&mut breaks);
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        breaks.dedup();
        // First breakpoint where the norm reaches the radius.
        let idx = breaks.partition_point(|&t| norm_sq_at(&coords, t) < r2);
        let t_lo = if idx == 0 { 0.0 } else { breaks[idx - 1] };
        let t_hi = breaks.get(idx).copied().unwrap_or(f64::INFINITY);
        let probe = if t_hi.is_finite() { 0.5 * (t_lo + t_hi) } else { 2.0 * t_lo + 1.0 };
        let (mut fixed, mut slope_sq) = (0.0, 0.0);
        for c in &coords {
            match c.position(probe) {
                Position::Fixed(v) => fixed += v * v,
                Position::Linear(s) => slope_sq += s * s,
            }
        }
        let t = if slope_sq > 0.0 {
            (((r2 - fixed) / slope_sq).max(0.0)).sqrt().clamp(t_lo, t_hi)
        } else {
            t_lo
        };
        coords.iter().map(|c| c.value_at(t)).collect()
    };

    let gain: f64 = coords.iter().zip(&positions).map(|(c, &u)| c.gain(u)).sum();
    gain.max(0.0)
}

/// `rho_r(z)`: the maximum gap over the ball divided by `radius`.
pub fn normalized_duality_gap(problem: &LpProblem, z: &PrimalDualIterate, radius: f64, omega: f64) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    let ax = problem.matrix.mul_vec(&z.x);
    let aty = problem.matrix.mul_transpose_vec(&z.y);
    max_gap_in_ball(problem, z, &ax, &aty, radius, omega) / radius
}

/// `mu(z, z_ref) = rho` at radius `||z - z_ref||_omega`, 0 when the points
/// coincide.
pub fn restart_gap(
    problem: &LpProblem,
    sharder: &Sharder,
    z: &PrimalDualIterate,
    ax: &[f64],
    aty: &[f64],
    reference: &PrimalDualIterate,
    omega: f64,
) -> f64 {
    let radius = sharder.weighted_distance(z, reference, omega);
    if radius <= 0.0 || !radius.is_finite() {
        return 0.0;
    }
    max_gap_in_ball(problem, z, ax, aty, radius, omega) / radius
}

/// Direct evaluation of `L(x, y^) - L(x^, y)` for small tests; avoids the
/// separable reformulation.
#[doc(hidden)]
pub fn lagrangian_gap(problem: &LpProblem, z: &PrimalDualIterate, z_hat: &PrimalDualIterate) -> f64 {
    let pen = |y: &[f64]| -> f64 {
        y.iter()
            .zip(problem.con_lower.iter().zip(&problem.con_upper))
            .map(|(&v, (&l, &u))| ext_mul(-l, v.max(0.0)) - ext_mul(-u, (-v).max(0.0)))
            .sum()
    };
    let lag = |x: &[f64], y: &[f64]| -> f64 {
        let ax = problem.matrix.mul_vec(x);
        let cx: f64 = problem.objective.iter().zip(x).map(|(c, x)| c * x).sum();
        let yax: f64 = y.iter().zip(&ax).map(|(y, a)| y * a).sum();
        cx - yax - pen(y)
    };
    lag(&z.x, &z_hat.y) - lag(&z_hat.x, &z.y)
}
