//! Bounded-variable revised simplex for linear programs in equality form.
//!
//! ```
//! use trussforge_lp::{solve_lp, LpProblem, LpStatus, SolveOptions};
//!
//! // min 2x + y  s.t.  x + y = 1,  x, y ≥ 0
//! let mut lp = LpProblem::new(1);
//! lp.add_column(2.0, 0.0, f64::INFINITY, [(0, 1.0)]);
//! lp.add_column(1.0, 0.0, f64::INFINITY, [(0, 1.0)]);
//! lp.set_rhs(0, 1.0);
//! let sol = solve_lp(&lp, &SolveOptions::default());
//! assert_eq!(sol.status, LpStatus::Optimal);
//! assert!((sol.objective_value - 1.0).abs() < 1e-12);
//! ```

mod basis;
pub mod lu;
mod problem;
mod simplex;

pub use problem::LpProblem;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("variable {var} has invalid bounds [{lo}, {hi}]")]
    InvalidBounds { var: usize, lo: f64, hi: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Position of a variable relative to the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic strictly between its bounds, at zero.
    Free,
}

/// Variable statuses usable as a starting-basis hint for a later solve of a
/// problem with the same layout.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Basis {
    /// One entry per structural variable.
    pub status: Vec<VarStatus>,
    /// One entry per row: whether that row's artificial variable is basic.
    pub rows: Vec<VarStatus>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Primal feasibility tolerance on bounds and rows.
    pub feas_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub opt_tol: f64,
    /// Pivot budget; `None` means `50 · (rows + cols)`.
    pub max_iters: Option<usize>,
    /// Pivots between fresh LU factorizations of the basis.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots that count as a stall. The first stalls
    /// perturb the bounds; later ones switch to Bland's rule.
    pub stall_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iters: None,
            refactor_interval: 100,
            stall_limit: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Row multipliers `y` with `Aᵀy + d = c`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
}

impl LpSolution {
    /// Largest complementary-slackness violation: a variable strictly inside
    /// its bounds must have zero reduced cost, one at its lower bound a
    /// nonnegative one, one at its upper bound a nonpositive one.
    pub fn complementarity_residual(&self, problem: &LpProblem, feas_tol: f64) -> f64 {
        let (lo, hi) = (problem.lower(), problem.upper());
        let mut worst = 0.0f64;
        for (j, (&x, &d)) in self.x.iter().zip(&self.reduced_costs).enumerate() {
            let at_lo = lo[j].is_finite() && x - lo[j] <= feas_tol;
            let at_hi = hi[j].is_finite() && hi[j] - x <= feas_tol;
            let viol = match (at_lo, at_hi) {
                (true, true) => 0.0,
                (true, false) => (-d).max(0.0),
                (false, true) => d.max(0.0),
                (false, false) => d.abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// Swappable LP engine. Everything in the workspace goes through this trait so
/// an external solver can be substituted without touching callers.
pub trait LpBackend {
    fn solve(&self, problem: &LpProblem, opts: &SolveOptions, hint: Option<&Basis>) -> LpSolution;
}

/// The in-repo backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct RevisedSimplex;

impl LpBackend for RevisedSimplex {
    fn solve(&self, problem: &LpProblem, opts: &SolveOptions, hint: Option<&Basis>) -> LpSolution {
        simplex::solve(problem, opts, hint)
    }
}

pub fn solve_lp(problem: &LpProblem, opts: &SolveOptions) -> LpSolution {
    simplex::solve(problem, opts, None)
}

pub fn solve_lp_with_hint(problem: &LpProblem, opts: &SolveOptions, hint: &Basis) -> LpSolution {
    simplex::solve(problem, opts, Some(hint))
}
