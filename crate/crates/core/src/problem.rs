//! Linear programs of the form
//!
//! ```text
//! minimize    c^T x
//! subject to  con_lower <= A x <= con_upper
//!             var_lower <=   x <= var_upper
//! ```
//!
//! together with the dual penalty `p(y; l, u) = u^T y^+ - l^T y^-`, the
//! saddle-point Lagrangian, and the zero-objective feasibility problems used by
//! feasibility polishing.

use std::fmt;

use crate::sparse::SparseMatrix;

/// `a * b` over the extended reals with the convention `0 * (+-inf) = 0`.
#[inline]
pub fn ext_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Sign restriction of one dual component (or one reduced cost), read off the
/// finiteness of the matching primal bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignSet {
    /// Both bounds infinite: the multiplier must vanish.
    Zero,
    /// Only the upper bound is finite.
    NonPositive,
    /// Only the lower bound is finite.
    NonNegative,
    /// Both bounds finite.
    Free,
}

impl SignSet {
    pub fn from_bounds(lower: f64, upper: f64) -> Self {
        match (lower.is_finite(), upper.is_finite()) {
            (false, false) => SignSet::Zero,
            (false, true) => SignSet::NonPositive,
            (true, false) => SignSet::NonNegative,
            (true, true) => SignSet::Free,
        }
    }

    /// Interval `[lo, hi]` describing the set.
    pub fn interval(self) -> (f64, f64) {
        match self {
            SignSet::Zero => (0.0, 0.0),
            SignSet::NonPositive => (f64::NEG_INFINITY, 0.0),
            SignSet::NonNegative => (0.0, f64::INFINITY),
            SignSet::Free => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    #[inline]
    pub fn project(self, v: f64) -> f64 {
        match self {
            SignSet::Zero => 0.0,
            SignSet::NonPositive => v.min(0.0),
            SignSet::NonNegative => v.max(0.0),
            SignSet::Free => v,
        }
    }

    #[inline]
    pub fn contains(self, v: f64) -> bool {
        self.project(v) == v
    }
}

/// The first invariant an [`LpProblem`] violates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    NanValue { what: &'static str, index: usize },
    NonFiniteMatrixEntry { row: usize, col: usize },
    NonFiniteObjective { index: usize },
    InvalidInfinity { what: &'static str, index: usize },
    BoundCrossing { what: &'static str, index: usize },
    LayoutMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { what, expected, found } => {
                write!(f, "{what} has length {found}, expected {expected}")
            }
            Violation::NanValue { what, index } => write!(f, "NaN in {what} at index {index}"),
            Violation::NonFiniteMatrixEntry { row, col } => {
                write!(f, "non-finite matrix entry at ({row}, {col})")
            }
            Violation::NonFiniteObjective { index } => {
                write!(f, "non-finite objective coefficient at index {index}")
            }
            Violation::InvalidInfinity { what, index } => {
                write!(f, "{what} has an infinity of the wrong sign at index {index}")
            }
            Violation::BoundCrossing { what, index } => {
                write!(f, "{what} bound crossing at index {index}")
            }
            Violation::LayoutMismatch => write!(f, "row and column layouts disagree"),
        }
    }
}

impl std::error::Error for Violation {}

/// A linear program in the two-sided form above. Minimization is implied;
/// `maximize` only records that the source model was a maximization whose
/// objective has already been negated.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub matrix: SparseMatrix,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub con_lower: Vec<f64>,
    pub con_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub maximize: bool,
    pub name: String,
    pub var_names: Vec<String>,
    pub con_names: Vec<String>,
}

impl LpProblem {
    pub fn new(
        matrix: SparseMatrix,
        objective: Vec<f64>,
        con_lower: Vec<f64>,
        con_upper: Vec<f64>,
        var_lower: Vec<f64>,
        var_upper: Vec<f64>,
    ) -> Self {
        Self {
            matrix,
            objective,
            objective_offset: 0.0,
            con_lower,
            con_upper,
            var_lower,
            var_upper,
            maximize: false,
            name: String::new(),
            var_names: Vec::new(),
            con_names: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn num_cons(&self) -> usize {
        self.matrix.nrows()
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), Violation> {
        let (m, n) = (self.num_cons(), self.num_vars());
        for (what, v, len) in [
            ("objective", &self.objective, n),
            ("var_lower", &self.var_lower, n),
            ("var_upper", &self.var_upper, n),
            ("con_lower", &self.con_lower, m),
            ("con_upper", &self.con_upper, m),
        ] {
            if v.len() != len {
                return Err(Violation::DimensionMismatch { what, expected: len, found: v.len() });
            }
            if let Some(index) = v.iter().position(|x| x.is_nan()) {
                return Err(Violation::NanValue { what, index });
            }
        }
        if let Some(index) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Violation::NonFiniteObjective { index });
        }
        if let Some((row, col, _)) = self.matrix.triplets().find(|t| !t.2.is_finite()) {
            return Err(Violation::NonFiniteMatrixEntry { row, col });
        }
        for (what, lower, upper) in [
            ("var", &self.var_lower, &self.var_upper),
            ("con", &self.con_lower, &self.con_upper),
        ] {
            for i in 0..lower.len() {
                if lower[i] == f64::INFINITY || upper[i] == f64::NEG_INFINITY {
                    return Err(Violation::InvalidInfinity { what, index: i });
                }
                if lower[i] > upper[i] {
                    return Err(Violation::BoundCrossing { what, index: i });
                }
            }
        }
        if !self.matrix.layouts_agree() {
            return Err(Violation::LayoutMismatch);
        }
        Ok(())
    }

    /// Sign set of dual component `i`.
    pub fn dual_set(&self, i: usize) -> SignSet {
        SignSet::from_bounds(self.con_lower[i], self.con_upper[i])
    }

    /// Sign set of reduced cost `j`.
    pub fn reduced_cost_set(&self, j: usize) -> SignSet {
        SignSet::from_bounds(self.var_lower[j], self.var_upper[j])
    }

    /// Saddle-point Lagrangian `c^T x - y^T A x - p(y; -u_c, -l_c)`.
    ///
    /// With this sign the primal step moves along `-(c - A^T y)` and the dual
    /// constraint reads `c - A^T y = r`.
    pub fn lagrangian(&self, x: &[f64], y: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let cx: f64 = self.objective.iter().zip(x).map(|(c, x)| c * x).sum();
        let yax: f64 = y.iter().zip(&ax).map(|(y, a)| y * a).sum();
        let neg_upper: Vec<f64> = self.con_upper.iter().map(|u| -u).collect();
        let neg_lower: Vec<f64> = self.con_lower.iter().map(|l| -l).collect();
        cx - yax - dual_penalty(y, &neg_upper, &neg_lower)
    }

    /// Zero-objective copy with identical constraints.
    pub fn primal_feasibility(&self) -> FeasibilitySubproblem {
        let mut problem = self.clone();
        problem.objective = vec![0.0; self.num_vars()];
        problem.objective_offset = 0.0;
        problem.maximize = false;
        FeasibilitySubproblem { problem, kind: FeasibilityKind::Primal }
    }

    /// Zero-objective LP over the dual variables `y`:
    /// `y in Y` as variable bounds and `(A^T y)_j in [c_j - sup R_j, c_j - inf R_j]`
    /// as rows.
    pub fn dual_feasibility(&self) -> FeasibilitySubproblem {
        let (m, n) = (self.num_cons(), self.num_vars());
        let mut var_lower = Vec::with_capacity(m);
        let mut var_upper = Vec::with_capacity(m);
        for i in 0..m {
            let (lo, hi) = self.dual_set(i).interval();
            var_lower.push(lo);
            var_upper.push(hi);
        }
        let mut con_lower = Vec::with_capacity(n);
        let mut con_upper = Vec::with_capacity(n);
        for j in 0..n {
            let c = self.objective[j];
            let (r_lo, r_hi) = self.reduced_cost_set(j).interval();
            con_lower.push(if r_hi.is_finite() { c - r_hi } else { f64::NEG_INFINITY });
            con_upper.push(if r_lo.is_finite() { c - r_lo } else { f64::INFINITY });
        }
        let mut problem = LpProblem::new(
            self.matrix.transpose(),
            vec![0.0; m],
            con_lower,
            con_upper,
            var_lower,
            var_upper,
        );
        problem.name = format!("{}-dual-feasibility", self.name);
        FeasibilitySubproblem { problem, kind: FeasibilityKind::Dual }
    }
}

/// `p(y; lower, upper) = upper^T y^+ - lower^T y^-` with `0 * inf = 0`.
pub fn dual_penalty(y: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    assert_eq!(y.len(), lower.len());
    assert_eq!(y.len(), upper.len());
    let mut total = 0.0;
    for i in 0..y.len() {
        total += dual_penalty_term(y[i], lower[i], upper[i]);
    }
    total
}

#[inline]
pub(crate) fn dual_penalty_term(y: f64, lower: f64, upper: f64) -> f64 {
    let pos = y.max(0.0);
    let neg = (-y).max(0.0);
    ext_mul(upper, pos) - ext_mul(lower, neg)
}

/// A primal-dual pair `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualIterate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PrimalDualIterate {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self { x: vec![0.0; n], y: vec![0.0; m] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityKind {
    /// Variables are the parent's `x`.
    Primal,
    /// Variables are the parent's `y`; rows are the parent's columns.
    Dual,
}

/// A zero-objective problem derived from a parent LP. Its variables embed into
/// the parent directly: the parent's `x` for [`FeasibilityKind::Primal`], the
/// parent's `y` for [`FeasibilityKind::Dual`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilitySubproblem {
    pub problem: LpProblem,
    pub kind: FeasibilityKind,
}


#[cfg(test)]
pub(crate) use tests::lp1;
