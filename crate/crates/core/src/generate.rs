//! Seeded synthetic instances with known optima or known infeasibility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::problem::LpProblem;
use crate::sparse::SparseMatrix;

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    RandomFeasible,
    RandomInfeasible,
    Transport,
    FeasibilitySystem,
}

impl InstanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstanceKind::RandomFeasible => "random-feasible",
            InstanceKind::RandomInfeasible => "random-infeasible",
            InstanceKind::Transport => "transport",
            InstanceKind::FeasibilitySystem => "feasibility-system",
        }
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-feasible" => Ok(InstanceKind::RandomFeasible),
            "random-infeasible" => Ok(InstanceKind::RandomInfeasible),
            "transport" => Ok(InstanceKind::Transport),
            "feasibility-system" => Ok(InstanceKind::FeasibilitySystem),
            other => Err(format!("unknown instance kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    /// Rows; number of sources for transport.
    pub m: usize,
    /// Columns; number of sinks for transport.
    pub n: usize,
    pub density: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub problem: LpProblem,
    /// Optimal objective certified by construction.
    pub optimal_objective: Option<f64>,
    /// A primal point: optimal for random-feasible, feasible for
    /// feasibility-system.
    pub primal_solution: Option<Vec<f64>>,
    /// Optimal duals and reduced costs for random-feasible.
    pub dual_solution: Option<Vec<f64>>,
    pub reduced_costs: Option<Vec<f64>>,
    /// `b` of `A x = b` for feasibility-system.
    pub rhs: Option<Vec<f64>>,
}

impl GeneratedInstance {
    fn bare(problem: LpProblem) -> Self {
        Self {
            problem,
            optimal_objective: None,
            primal_solution: None,
            dual_solution: None,
            reduced_costs: None,
            rhs: None,
        }
    }
}

pub fn generate_instance(spec: &InstanceSpec) -> GeneratedInstance {
    assert!(spec.m >= 1 && spec.n >= 1, "instance needs at least one row and one column");
    assert!(spec.density > 0.0 && spec.density <= 1.0, "density must lie in (0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut inst = match spec.kind {
        InstanceKind::RandomFeasible => random_feasible(&mut rng, spec.m, spec.n, spec.density),
        InstanceKind::RandomInfeasible => random_infeasible(&mut rng, spec.m, spec.n, spec.density),
        InstanceKind::Transport => transport(&mut rng, spec.m, spec.n),
        InstanceKind::FeasibilitySystem => feasibility_system(&mut rng, spec.m, spec.n, spec.density),
    };
    inst.problem.name = format!("{}-{}x{}-s{}", spec.kind.as_str(), spec.m, spec.n, spec.seed);
    inst
}

/// Sparse pattern with i.i.d. entries from `sample`; every row and column gets
/// at least one entry.
pub fn random_sparse<R: Rng, F: FnMut(&mut R) -> f64>(
    rng: &mut R,
    m: usize,
    n: usize,
    density: f64,
    mut sample: F,
) -> SparseMatrix {
    let mut triplets = Vec::new();
    let mut row_hit = vec![false; m];
    let mut col_hit = vec![false; n];
    for i in 0..m {
        for j in 0..n {
            if density >= 1.0 || rng.random_bool(density) {
                triplets.push((i, j, sample(rng)));
                row_hit[i] = true;
                col_hit[j] = true;
            }
        }
    }
    for i in 0..m {
        if !row_hit[i] {
            let j = rng.random_range(0..n);
            triplets.push((i, j, sample(rng)));
            col_hit[j] = true;
        }
    }
    for j in 0..n {
        if !col_hit[j] {
            let i = rng.random_range(0..m);
            triplets.push((i, j, sample(rng)));
        }
    }
    SparseMatrix::from_triplets(m, n, &triplets)
}

fn nonzero_uniform<R: Rng>(rng: &mut R) -> f64 {
    // Keep magnitudes away from zero so every stored entry matters.
    let v: f64 = rng.random_range(0.1..1.0);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Samples `x*`, `y*`, `r*` with complementary slackness and sets
/// `c = A^T y* + r*`, so `c^T x*` is optimal.
fn random_feasible<R: Rng>(rng: &mut R, m: usize, n: usize, density: f64) -> GeneratedInstance {
    let a = random_sparse(rng, m, n, density, nonzero_uniform);
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut var_lower = vec![0.0; n];
    let mut var_upper = vec![INF; n];
    for j in 0..n {
        let kind = rng.random_range(0..100);
        let active = rng.random_bool(0.5);
        let mult: f64 = rng.random_range(0.1..1.0);
        if kind < 40 {
            // [0, inf)
            if active {
                r[j] = mult;
            } else {
                x[j] = rng.random_range(0.1..5.0);
            }
        } else if kind < 70 {
            let lo = rng.random_range(-5.0..0.0);
            let hi = lo + rng.random_range(1.0..5.0);
            var_lower[j] = lo;
            var_upper[j] = hi;
            match rng.random_range(0..3) {
                0 => {
                    x[j] = lo;
                    r[j] = mult;
                }
                1 => {
                    x[j] = hi;
                    r[j] = -mult;
                }
                _ => x[j] = rng.random_range(lo..hi),
            }
        } else if kind < 85 {
            var_lower[j] = -INF;
            x[j] = rng.random_range(-5.0..5.0);
        } else {
            let hi = rng.random_range(-2.0..5.0);
            var_lower[j] = -INF;
            var_upper[j] = hi;
            if active {
                x[j] = hi;
                r[j] = -mult;
            } else {
                x[j] = hi - rng.random_range(0.1..5.0);
            }
        }
    }
    let ax = a.mul_vec(&x);
    let mut y = vec![0.0; m];
    let mut con_lower = vec![-INF; m];
    let mut con_upper = vec![INF; m];
    for i in 0..m {
        let kind = rng.random_range(0..100);
        let active = rng.random_bool(0.6);
        let mult: f64 = rng.random_range(0.1..1.0);
        let slack: f64 = rng.random_range(0.1..5.0);
        if kind < 20 {
            con_lower[i] = ax[i];
            con_upper[i] = ax[i];
            y[i] = rng.random_range(-1.0..1.0);
        } else if kind < 55 {
            // a^T x <= u
            if active {
                con_upper[i] = ax[i];
                y[i] = -mult;
            } else {
                con_upper[i] = ax[i] + slack;
            }
        } else if kind < 90 {
            // a^T x >= l
            if active {
                con_lower[i] = ax[i];
                y[i] = mult;
            } else {
                con_lower[i] = ax[i] - slack;
            }
        } else {
            let width = rng.random_range(1.0..5.0);
            match rng.random_range(0..3) {
                0 => {
                    con_lower[i] = ax[i];
                    con_upper[i] = ax[i] + width;
                    y[i] = mult;
                }
                1 => {
                    con_upper[i] = ax[i];
                    con_lower[i] = ax[i] - width;
                    y[i] = -mult;
                }
                _ => {
                    con_lower[i] = ax[i] - slack;
                    con_upper[i] = con_lower[i] + slack + width;
                }
            }
        }
    }
    let aty = a.mul_transpose_vec(&y);
    let c: Vec<f64> = aty.iter().zip(&r).map(|(g, r)| g + r).collect();
    let optimum: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let problem = LpProblem::new(a, c, con_lower, con_upper, var_lower, var_upper);
    GeneratedInstance {
        problem,
        optimal_objective: Some(optimum),
        primal_solution: Some(x),
        dual_solution: Some(y),
        reduced_costs: Some(r),
        rhs: None,
    }
}

/// A random feasible instance plus the contradictory pair
/// `a^T x <= beta`, `a^T x >= beta + 1`.
fn random_infeasible<R: Rng>(rng: &mut R, m: usize, n: usize, density: f64) -> GeneratedInstance {
    let base = random_feasible(rng, m, n, density);
    let x = base.primal_solution.expect("feasible point");
    let row = random_sparse(rng, 1, n, density, nonzero_uniform);
    let beta: f64 = row.mul_vec(&x)[0];
    let mut p = base.problem;
    let mut triplets: Vec<(usize, usize, f64)> = p.matrix.triplets().collect();
    for (_, j, v) in row.triplets() {
        triplets.push((m, j, v));
        triplets.push((m + 1, j, v));
    }
    p.matrix = SparseMatrix::from_triplets(m + 2, n, &triplets);
    p.con_lower.extend([-INF, beta + 1.0]);
    p.con_upper.extend([beta, INF]);
    GeneratedInstance::bare(p)
}

/// Complete bipartite transport problem with `m` sources and `n` sinks; total
/// demand is 80% of total supply.
fn transport<R: Rng>(rng: &mut R, m: usize, n: usize) -> GeneratedInstance {
    let supply: Vec<f64> = (0..m).map(|_| rng.random_range(5.0..15.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
    let total_supply: f64 = supply.iter().sum();
    let total_raw: f64 = raw.iter().sum();
    let demand: Vec<f64> = raw.iter().map(|d| 0.8 * total_supply * d / total_raw).collect();
    let cost: Vec<f64> = (0..m * n).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut triplets = Vec::with_capacity(2 * m * n);
    for i in 0..m {
        for j in 0..n {
            let col = i * n + j;
            triplets.push((i, col, 1.0));
            triplets.push((m + j, col, 1.0));
        }
    }
    let a = SparseMatrix::from_triplets(m + n, m * n, &triplets);
    let mut con_lower = vec![-INF; m];
    con_lower.extend(&demand);
    let mut con_upper = supply;
    con_upper.extend(std::iter::repeat_n(INF, n));
    let problem = LpProblem::new(a, cost, con_lower, con_upper, vec![0.0; m * n], vec![INF; m * n]);
    GeneratedInstance::bare(problem)
}

/// `A x = b, x >= 0` with Gaussian `A` and `b = A x_feas`, `x_feas >= 1`.
fn feasibility_system<R: Rng>(rng: &mut R, m: usize, n: usize, density: f64) -> GeneratedInstance {
    let a = random_sparse(rng, m, n, density, |r| StandardNormal.sample(r));
    let x_feas: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
    let b = a.mul_vec(&x_feas);
    let problem = LpProblem::new(a, vec![0.0; n], b.clone(), b.clone(), vec![0.0; n], vec![INF; n]);
    GeneratedInstance {
        primal_solution: Some(x_feas),
        rhs: Some(b),
        optimal_objective: Some(0.0),
        ..GeneratedInstance::bare(problem)
    }
}
