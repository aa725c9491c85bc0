//! Generic DC algorithm for `f = g − h` with `g`, `h` convex.
//!
//! Each iteration linearizes `h` at the current point with a subgradient
//! `s^k` and minimizes the convex model `g(u) − ⟨s^k, u⟩`.

use crate::error::DcError;
use crate::linalg::norm_inf;

/// Output of one convex subproblem solve.
#[derive(Debug, Clone)]
pub struct ConvexSolve {
    pub u: Vec<f64>,
    /// Stationarity residual `‖ε‖` of the returned point (0 when exact).
    pub residual: f64,
    /// Inner iterations spent, for reporting.
    pub inner_iterations: usize,
}

pub trait DcProblem {
    type Error: std::error::Error + 'static;

    /// Called at the start of iteration `k`. Returns `false` while the
    /// algorithm must not stop yet (e.g. during a continuation schedule).
    fn prepare(&mut self, _k: usize, _u: &[f64]) -> Result<bool, Self::Error> {
        Ok(true)
    }

    /// Some `s ∈ ∂h(u)`.
    fn subgradient(&mut self, u: &[f64]) -> Result<Vec<f64>, Self::Error>;

    /// Approximate minimizer of `g(u) − ⟨s, u⟩`, warm-started at `warm`.
    /// `allowance` bounds the admissible residual in inexact mode.
    fn solve_convex(
        &mut self,
        s: &[f64],
        warm: &[f64],
        allowance: Option<f64>,
    ) -> Result<ConvexSolve, Self::Error>;

    /// `g(u) − h(u)` for the current stage.
    fn objective(&self, u: &[f64]) -> f64;

    /// Residual of the optimality condition `s ∈ ∂g(u)`.
    fn stationarity_residual(&self, u: &[f64], s: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcOptions {
    pub max_iter: usize,
    /// Stop when `‖u^{k+1} − u^k‖∞ ≤ fixed_point_tol`.
    pub fixed_point_tol: f64,
    /// Bound on `Σ‖ε^k‖²`; `None` runs the exact scheme.
    pub residual_budget: Option<f64>,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            fixed_point_tol: 0.0,
            residual_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcRecord {
    pub k: usize,
    /// Objective at `u^k` for the stage active in iteration `k`.
    pub objective_before: f64,
    /// Objective at `u^{k+1}` for the same stage.
    pub objective_after: f64,
    pub step_norm: f64,
    pub residual: f64,
    pub inner_iterations: usize,
    /// Whether termination was permitted in this iteration.
    pub may_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Running,
    ConvergedFixedPoint,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct DcState {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub k: usize,
    pub history: Vec<DcRecord>,
    pub status: DcStatus,
    pub residual_sq_sum: f64,
}

impl DcState {
    pub fn inner_iterations(&self) -> usize {
        self.history.iter().map(|r| r.inner_iterations).sum()
    }

    /// Largest increase `f(u^{k+1}) − f(u^k)` within one stage.
    pub fn max_increase(&self) -> f64 {
        self.history
            .iter()
            .map(|r| r.objective_after - r.objective_before)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks `f(u^{k+1}) ≤ f(u^k) + tol·(1 + |f(u⁰)|)` for every record.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let Some(first) = self.history.first() else {
            return true;
        };
        let slack = tol * (1.0 + first.objective_before.abs());
        self.history
            .iter()
            .all(|r| r.objective_after <= r.objective_before + slack)
    }
}

/// Runs the DC iteration from `u0`.
pub fn dc_solve<P: DcProblem>(
    problem: &mut P,
    u0: &[f64],
    opts: &DcOptions,
) -> Result<DcState, DcError<P::Error>> {
    let mut u = u0.to_vec();
    let mut state = DcState {
        u: Vec::new(),
        s: Vec::new(),
        k: 0,
        history: Vec::new(),
        status: DcStatus::Running,
        residual_sq_sum: 0.0,
    };
    let mut checked_start = false;
    for k in 0..opts.max_iter {
        let wrap = |source| DcError::Subproblem { iteration: k, source };
        let may_stop = problem.prepare(k, &u).map_err(wrap)?;
        let objective_before = problem.objective(&u);
        if !checked_start {
            if !objective_before.is_finite() {
                return Err(DcError::NonFiniteStart);
            }
            checked_start = true;
        }
        let s = problem.subgradient(&u).map_err(wrap)?;
        let allowance = opts.residual_budget.map(|budget| {
            let remaining = (budget - state.residual_sq_sum).max(0.0);
            (budget * 0.5_f64.powi(k as i32 + 1)).min(remaining).sqrt()
        });
        let step = problem.solve_convex(&s, &u, allowance).map_err(wrap)?;
        if let Some(allow) = allowance {
            if step.residual > allow {
                return Err(DcError::ResidualBudgetExceeded {
                    iteration: k,
                    residual: step.residual,
                    allowance: allow,
                });
            }
            state.residual_sq_sum += step.residual * step.residual;
        }
        let diff: Vec<f64> = step.u.iter().zip(&u).map(|(a, b)| a - b).collect();
        let step_norm = norm_inf(&diff);
        let objective_after = problem.objective(&step.u);
        state.history.push(DcRecord {
            k,
            objective_before,
            objective_after,
            step_norm,
            residual: step.residual,
            inner_iterations: step.inner_iterations,
            may_stop,
        });
        u = step.u;
        state.k = k + 1;
        state.s = s;
        if may_stop && step_norm <= opts.fixed_point_tol {
            state.status = DcStatus::ConvergedFixedPoint;
            state.u = u;
            return Ok(state);
        }
    }
    state.status = DcStatus::MaxIter;
    state.u = u;
    Ok(state)
}

/// Stationarity residual of `u` for the linearization `s`; zero at a
/// critical point.
pub fn criticality_residual<P: DcProblem>(problem: &P, u: &[f64], s: &[f64]) -> f64 {
    problem.stationarity_residual(u, s)
}
