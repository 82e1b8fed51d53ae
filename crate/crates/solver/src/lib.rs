//! Interior-point solvers for linear, second-order cone and smooth nonlinear
//! programs, built on one sparse LDLᵀ kernel.
//!
//! All three solvers report duals with one sign convention: for a row
//! `g(x) (rel) rhs` with multiplier `y`, stationarity reads
//! `∇f(x) = Σ y ∇g(x)`; rows of the form `≥` carry `y ≥ 0`, rows of the form
//! `≤` carry `y ≤ 0`, and equality rows are free.

pub mod cones;
pub mod conic;
pub mod ldl;
pub mod nlp;
pub mod sparse;

pub use cones::Cone;
pub use conic::{solve_conic, solve_lp, ConicProblem};
pub use nlp::{solve_nlp, NlpProblem};
pub use sparse::CscMatrix;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    LocallyOptimal,
    InfeasibleOrUnbounded,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::LocallyOptimal => "LOCALLY_SOLVED",
            SolveStatus::InfeasibleOrUnbounded => "INFEASIBLE_OR_UNBOUNDED",
            SolveStatus::IterationLimit => "ITERATION_LIMIT",
            SolveStatus::NumericalFailure => "NUMERICAL_ERROR",
        }
    }

    pub fn is_solved(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::LocallyOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Optimality tolerance (relative gap, scaled KKT error).
    pub tol: f64,
    /// Feasibility tolerance; defaults to `tol` when `None`.
    pub feas_tol: Option<f64>,
    pub max_iter: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub verbose: bool,
}

impl SolverOptions {
    pub fn lp() -> Self {
        SolverOptions { tol: 1e-8, feas_tol: None, max_iter: 200, time_limit: None, verbose: false }
    }

    pub fn conic() -> Self {
        SolverOptions { tol: 1e-7, ..Self::lp() }
    }

    pub fn nlp() -> Self {
        SolverOptions { tol: 1e-6, max_iter: 500, ..Self::lp() }
    }

    pub fn feas(&self) -> f64 {
        self.feas_tol.unwrap_or(self.tol)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0) || !(self.feas() > 0.0) {
            return Err(SolverError::InvalidOptions("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Constraint multipliers, one per row.
    pub y: Vec<f64>,
    /// Lower-bound multipliers (nonnegative); empty for conic problems.
    pub z_lb: Vec<f64>,
    /// Upper-bound multipliers (nonpositive); empty for conic problems.
    pub z_ub: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    /// Seconds.
    pub solve_time: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported cone for this solver: {0}")]
    UnsupportedCone(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}
