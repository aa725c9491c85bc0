//! Support-constrained problems `min f(u)` s.t. `‖u_h‖₀ ≤ K`, solved through
//! the exact penalty `f(u) + ρ(‖w_u‖₁ − |w_u|_K)` and the DC algorithm.

use crate::dc::{dc_solve, ConvexSolve, DcOptions, DcProblem, DcRecord, DcStatus};
use crate::error::L0Error;
use crate::fem::FemSystem;
use crate::linalg::{dot2, norm2};
use crate::measure::{
    largest_k_exact, largest_k_greedy, reformulation_gap, weighted_l0,
    weighted_l1, GapReport, KSelection,
};
use crate::problems::SmoothProblem;
use crate::ssn::{
    default_tau, f_tau_residual_split, ssn_solve_split, L1Weights, QuadraticOperator, SsnOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroSignPolicy {
    Zero,
    Plus,
    Minus,
    /// Sign of the smooth linear term (the load for the Poisson problem).
    SignOfLoad,
}

impl std::str::FromStr for ZeroSignPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "plus" => Ok(Self::Plus),
            "minus" => Ok(Self::Minus),
            "sign_of_load" => Ok(Self::SignOfLoad),
            other => Err(format!("unknown zero-sign policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    /// `u⁰ = H⁻¹ q_smooth`.
    UnconstrainedSolve,
    Zero,
    /// Given start on the free degrees of freedom.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    Greedy,
    Exact,
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Greedy => "greedy",
            SelectionMode::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L0PenaltyConfig {
    pub k: f64,
    pub rho: f64,
    pub schedule_lambda: Option<f64>,
    pub zero_sign: ZeroSignPolicy,
    pub init: InitPolicy,
    /// Selection used for the subgradients.
    pub selection: SelectionMode,
    pub max_dc_iter: usize,
    /// Overrides the problem's subproblem tolerance.
    pub ssn_tol: Option<f64>,
    pub max_newton: usize,
    /// Inexact mode: bound on the summed squared subproblem residuals.
    pub residual_budget: Option<f64>,
}

impl Default for L0PenaltyConfig {
    fn default() -> Self {
        Self {
            k: 0.25,
            rho: 1e9,
            schedule_lambda: None,
            zero_sign: ZeroSignPolicy::Zero,
            init: InitPolicy::UnconstrainedSolve,
            selection: SelectionMode::Greedy,
            max_dc_iter: 500,
            ssn_tol: None,
            max_newton: 100,
            residual_budget: None,
        }
    }
}

impl L0PenaltyConfig {
    pub fn validate(&self, system: &FemSystem) -> Result<(), L0Error> {
        let total = system.domain_measure();
        if !(self.k > 0.0) || self.k > total * (1.0 + 1e-12) {
            return Err(L0Error::InvalidConfig(format!(
                "K must lie in (0, {total}], got {}",
                self.k
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(L0Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if let Some(l) = self.schedule_lambda {
            if !(l > 0.0 && l < 1.0) {
                return Err(L0Error::InvalidConfig(format!(
                    "schedule lambda must lie in (0, 1), got {l}"
                )));
            }
        }
        if self.max_dc_iter == 0 {
            return Err(L0Error::InvalidConfig("max_dc_iter must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub k: usize,
    pub budget: f64,
    /// Penalized objective at `u^{k+1}` for budget `K_k`.
    pub objective: f64,
    pub gap: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub selection_exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    /// `(Hu − q)ᵀu`.
    pub pairing: f64,
    /// Max `|ĝ_j|` over supported nodes whose patch lies in the selection.
    pub cond_inside: f64,
    /// Max `|ĝ_j + ρ sign(u_j)|` over supported nodes outside the selection.
    pub cond_outside: f64,
    /// Max `|ĝ_j|` over zero nodes.
    pub cond_zero: f64,
    pub max_scaled_gradient: f64,
    /// `ρ > max_j |ĝ_j|`.
    pub exact_penalty: bool,
    pub selection_exact: bool,
    pub support_nodes: usize,
    /// Scaled gradient `ĝ_j = (Hu − q)_j / μ(△_j)` on the free nodes.
    pub scaled_gradient: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct L0Solution {
    /// Solution on the free degrees of freedom.
    pub u: Vec<f64>,
    /// Smooth objective `f(u)`.
    pub objective: f64,
    pub penalized: f64,
    pub l0: f64,
    pub gap: GapReport,
    pub dc_iters: usize,
    pub newton_iters: usize,
    pub status: DcStatus,
    pub schedule_reductions: usize,
    pub log: Vec<IterationLog>,
    pub records: Vec<DcRecord>,
    pub report: OptimalityReport,
    pub selection: SelectionMode,
    pub subproblems_converged: bool,
}

impl L0Solution {
    pub fn u_full(&self, system: &FemSystem) -> Vec<f64> {
        system.embed(&self.u)
    }

    /// Penalized objective non-increasing within each stage up to
    /// `tol·(1 + |f(u⁰)|)`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let Some(first) = self.records.first() else {
            return true;
        };
        let slack = tol * (1.0 + first.objective_before.abs());
        self.records
            .iter()
            .all(|r| r.objective_after <= r.objective_before + slack)
    }

    /// Largest `f(u^{k+1}) − f(u^k)` relative to `1 + |f(u⁰)|`.
    pub fn worst_increase(&self) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        let scale = 1.0 + first.objective_before.abs();
        self.records
            .iter()
            .map(|r| (r.objective_after - r.objective_before) / scale)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn select(
    w: &[f64],
    system: &FemSystem,
    budget: f64,
    mode: SelectionMode,
) -> Result<KSelection, L0Error> {
    let space = system.element_space();
    Ok(match mode {
        SelectionMode::Greedy => largest_k_greedy(w, space, budget)?,
        SelectionMode::Exact => match largest_k_exact(w, space, budget) {
            Ok(sel) => sel,
            Err(crate::error::MeasureError::OracleLimit { .. }) => largest_k_greedy(w, space, budget)?,
            Err(e) => return Err(e.into()),
        },
    })
}

/// `ρ (Dᵀ r) ⋆ a` restricted to the free nodes.
fn penalty_subgradient(
    u: &[f64],
    system: &FemSystem,
    selection: &KSelection,
    rho: f64,
    zero_sign: &[f64],
) -> Vec<f64> {
    let mask = selection.mask(system.num_elements());
    system
        .free_nodes
        .iter()
        .enumerate()
        .map(|(dof, &node)| {
            let a = if u[dof] != 0.0 { u[dof].signum() } else { zero_sign[dof] };
            if a == 0.0 {
                return 0.0;
            }
            // Same summation order as the patch measure, so a fully selected
            // patch reproduces ρ·μ(△_j) exactly.
            let r: f64 = system.node_elements[node]
                .iter()
                .map(|&t| if mask[t] { system.elem_measure[t] } else { 0.0 })
                .sum();
            rho * (a * r)
        })
        .collect()
}

struct PenalizedDc<'a, P: SmoothProblem> {
    problem: &'a P,
    cfg: &'a L0PenaltyConfig,
    weights: L1Weights,
    zero_sign: Vec<f64>,
    budget: f64,
    previous_budget: f64,
    reductions: usize,
    ssn_tol: f64,
    log: Vec<IterationLog>,
    current_k: usize,
    selection_exact: bool,
    all_converged: bool,
}

impl<P: SmoothProblem> PenalizedDc<'_, P> {
    fn gap(&self, u: &[f64], budget: f64) -> Result<GapReport, L0Error> {
        let system = self.problem.system();
        let w = system.w_of_free(u);
        Ok(reformulation_gap(&w, system.element_space(), budget)?)
    }
}

impl<P: SmoothProblem> DcProblem for PenalizedDc<'_, P> {
    type Error = L0Error;

    fn prepare(&mut self, k: usize, _u: &[f64]) -> Result<bool, L0Error> {
        self.current_k = k;
        if let Some(lambda) = self.cfg.schedule_lambda {
            let next = (lambda * self.previous_budget).max(self.cfg.k);
            if next < self.previous_budget {
                self.reductions += 1;
            }
            self.budget = next;
            self.previous_budget = next;
        }
        Ok(self.budget == self.cfg.k)
    }

    fn subgradient(&mut self, u: &[f64]) -> Result<Vec<f64>, L0Error> {
        let system = self.problem.system();
        let w = system.w_of_free(u);
        let selection = select(&w, system, self.budget, self.cfg.selection)?;
        self.selection_exact = selection.exact;
        Ok(penalty_subgradient(u, system, &selection, self.cfg.rho, &self.zero_sign))
    }

    fn solve_convex(
        &mut self,
        s: &[f64],
        warm: &[f64],
        allowance: Option<f64>,
    ) -> Result<ConvexSolve, L0Error> {
        let opts = SsnOptions {
            tau: Some(default_tau(warm, &self.weights)),
            tol: allowance.unwrap_or(self.ssn_tol),
            max_newton: self.cfg.max_newton,
            ..SsnOptions::default()
        };
        let out = ssn_solve_split(
            self.problem.hessian(),
            self.problem.q_smooth(),
            s,
            &self.weights,
            warm,
            &opts,
        )?;
        self.all_converged &= out.converged;
        let gap = self.gap(&out.u, self.budget)?;
        let objective = self.problem.value(&out.u) + self.cfg.rho * gap.gap;
        self.log.push(IterationLog {
            k: self.current_k,
            budget: self.budget,
            objective,
            gap: gap.gap,
            newton_iters: out.iterations,
            residual: out.residual_norm,
            selection_exact: self.selection_exact,
        });
        Ok(ConvexSolve {
            u: out.u,
            residual: out.residual_norm,
            inner_iterations: out.iterations,
        })
    }

    fn objective(&self, u: &[f64]) -> f64 {
        match self.gap(u, self.budget) {
            Ok(g) => self.problem.value(u) + self.cfg.rho * g.gap,
            Err(_) => f64::NAN,
        }
    }

    fn stationarity_residual(&self, u: &[f64], s: &[f64]) -> f64 {
        let tau = default_tau(u, &self.weights);
        f_tau_residual_split(u, self.problem.hessian(), self.problem.q_smooth(), s, &self.weights, tau)
            .map_or(f64::INFINITY, |f| norm2(&f))
    }
}

fn zero_sign_vector<P: SmoothProblem>(problem: &P, policy: ZeroSignPolicy) -> Vec<f64> {
    let n = problem.dim();
    match policy {
        ZeroSignPolicy::Zero => vec![0.0; n],
        ZeroSignPolicy::Plus => vec![1.0; n],
        ZeroSignPolicy::Minus => vec![-1.0; n],
        ZeroSignPolicy::SignOfLoad => problem
            .q_smooth()
            .iter()
            .map(|q| if *q == 0.0 { 0.0 } else { q.signum() })
            .collect(),
    }
}

/// Initial point according to `cfg.init`.
pub fn initial_point<P: SmoothProblem>(problem: &P, cfg: &L0PenaltyConfig) -> Result<Vec<f64>, L0Error> {
    match &cfg.init {
        InitPolicy::UnconstrainedSolve => Ok(problem.unconstrained_minimizer()?),
        InitPolicy::Zero => Ok(vec![0.0; problem.dim()]),
        InitPolicy::Custom(u) if u.len() == problem.dim() => Ok(u.clone()),
        InitPolicy::Custom(u) => Err(L0Error::InvalidConfig(format!(
            "initial point has {} entries, expected {}",
            u.len(),
            problem.dim()
        ))),
    }
}

/// Runs the DC algorithm on the penalized problem.
pub fn solve_l0_penalized<P: SmoothProblem>(
    problem: &P,
    cfg: &L0PenaltyConfig,
) -> Result<L0Solution, L0Error> {
    let system = problem.system();
    cfg.validate(system)?;
    let u0 = initial_point(problem, cfg)?;
    let weights = L1Weights::scaled(cfg.rho, &system.free_patch_measure())?;
    let total = system.domain_measure();
    let mut dc = PenalizedDc {
        problem,
        cfg,
        weights,
        zero_sign: zero_sign_vector(problem, cfg.zero_sign),
        budget: if cfg.schedule_lambda.is_some() { total } else { cfg.k },
        previous_budget: total,
        reductions: 0,
        ssn_tol: cfg.ssn_tol.unwrap_or_else(|| problem.subproblem_tol()),
        log: Vec::new(),
        current_k: 0,
        selection_exact: false,
        all_converged: true,
    };
    let opts = DcOptions {
        max_iter: cfg.max_dc_iter,
        fixed_point_tol: 0.0,
        residual_budget: cfg.residual_budget,
    };
    let state = dc_solve(&mut dc, &u0, &opts)?;
    if dc.budget != cfg.k {
        return Err(L0Error::ScheduleIncomplete(state.k));
    }
    let u = state.u.clone();
    let gap = dc.gap(&u, cfg.k)?;
    let objective = problem.value(&u);
    let w = system.w_of_free(&u);
    let l0 = weighted_l0(&w, system.element_space())?;
    let report = optimality_report(problem, &u, cfg.rho, cfg.k)?;
    Ok(L0Solution {
        objective,
        penalized: objective + cfg.rho * gap.gap,
        l0,
        gap,
        dc_iters: state.k,
        newton_iters: state.inner_iterations(),
        status: state.status,
        schedule_reductions: dc.reductions,
        log: dc.log,
        records: state.history,
        report,
        selection: cfg.selection,
        subproblems_converged: dc.all_converged,
        u,
    })
}

/// Residuals of the first-order conditions at `u` for budget `k`.
pub fn optimality_report<P: SmoothProblem>(
    problem: &P,
    u: &[f64],
    rho: f64,
    k: f64,
) -> Result<OptimalityReport, L0Error> {
    let system = problem.system();
    let n = problem.dim();
    if u.len() != n {
        return Err(L0Error::InvalidConfig(format!(
            "candidate has {} entries, expected {n}",
            u.len()
        )));
    }
    let mut hu = vec![0.0; n];
    problem.hessian().apply_accurate(u, &mut hu);
    let grad: Vec<f64> = hu.iter().zip(problem.q_smooth()).map(|(a, b)| a - b).collect();
    let pairing = dot2(&grad, u);
    let w = system.w_of_free(u);
    let space = system.element_space();
    let selection = match largest_k_exact(&w, space, k) {
        Ok(sel) => sel,
        Err(crate::error::MeasureError::OracleLimit { .. }) => largest_k_greedy(&w, space, k)?,
        Err(e) => return Err(e.into()),
    };
    let mask = selection.mask(system.num_elements());
    let patch = system.free_patch_measure();
    let scaled: Vec<f64> = grad.iter().zip(&patch).map(|(g, p)| g / p).collect();
    let (mut inside, mut outside, mut zero) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut support_nodes = 0;
    for (dof, &node) in system.free_nodes.iter().enumerate() {
        let g = scaled[dof];
        if u[dof] == 0.0 {
            zero = zero.max(g.abs());
            continue;
        }
        support_nodes += 1;
        if system.node_elements[node].iter().all(|&t| mask[t]) {
            inside = inside.max(g.abs());
        } else {
            outside = outside.max((g + rho * u[dof].signum()).abs());
        }
    }
    let max_scaled = scaled.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    Ok(OptimalityReport {
        pairing,
        cond_inside: inside,
        cond_outside: outside,
        cond_zero: zero,
        max_scaled_gradient: max_scaled,
        exact_penalty: rho > max_scaled,
        selection_exact: selection.exact,
        support_nodes,
        scaled_gradient: scaled,
    })
}

/// Penalty value `‖w_u‖₁ − |w_u|_K` together with `f(u)` for one sweep entry.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub rho: f64,
    pub solution: L0Solution,
    /// `P(u) = ‖w_u‖₁ − |w_u|_K`.
    pub penalty: f64,
}

/// One solve per `ρ` (increasing), each warm-started from the previous one.
pub fn penalty_sweep<P: SmoothProblem>(
    problem: &P,
    cfg: &L0PenaltyConfig,
    rhos: &[f64],
) -> Result<Vec<SweepEntry>, L0Error> {
    if rhos.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(L0Error::InvalidConfig("penalty values must increase".into()));
    }
    let mut out = Vec::with_capacity(rhos.len());
    let mut run_cfg = cfg.clone();
    for &rho in rhos {
        run_cfg.rho = rho;
        let solution = solve_l0_penalized(problem, &run_cfg)?;
        run_cfg.init = InitPolicy::Custom(solution.u.clone());
        // Later runs start from a point already on the target budget.
        run_cfg.schedule_lambda = None;
        out.push(SweepEntry {
            rho,
            penalty: solution.gap.gap,
            solution,
        });
    }
    Ok(out)
}

/// Gap of a given nodal vector (all nodes) against budget `k`.
pub fn gap_of_field(system: &FemSystem, u_full: &[f64], k: f64) -> Result<(f64, GapReport), L0Error> {
    let w = system
        .w_of(u_full)
        .map_err(|e| L0Error::InvalidConfig(e.to_string()))?;
    let space = system.element_space();
    let l0 = weighted_l0(&w, space)?;
    let gap = reformulation_gap(&w, space, k)?;
    Ok((l0, gap))
}

/// `‖w_u‖₁` on the element measure space.
pub fn element_l1(system: &FemSystem, u: &[f64]) -> Result<f64, L0Error> {
    Ok(weighted_l1(&system.w_of_free(u), system.element_space())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, TriMesh};
    use crate::problems::{poisson_prototype, PoissonProblem};
    use std::sync::Arc;

    #[test]
    fn prototype_coarse_run_is_feasible_and_monotone() {
        for n in [8, 16] {
            let p = poisson_prototype(n).unwrap();
            let sol = solve_l0_penalized(&p, &L0PenaltyConfig::default()).unwrap();
            assert_eq!(sol.status, DcStatus::ConvergedFixedPoint);
            assert!(sol.l0 <= 0.25 + 1e-12);
            assert!(sol.gap.gap <= 1e-12 * sol.gap.l1);
            assert!(sol.is_monotone(1e-12));
            assert!(sol.objective <= 0.0);
            assert!(sol.report.pairing.abs() <= 1e-10);
        }
        let p = poisson_prototype(16).unwrap();
        let sol = solve_l0_penalized(&p, &L0PenaltyConfig::default()).unwrap();
        assert!(sol.objective < 0.0);
        assert!(sol.report.cond_zero <= 1e9 * (1.0 + 1e-9));
    }

    #[test]
    fn full_budget_reproduces_unconstrained_minimizer() {
        let p = poisson_prototype(6).unwrap();
        let total = p.system().domain_measure();
        let cfg = L0PenaltyConfig {
            k: total,
            ..L0PenaltyConfig::default()
        };
        let sol = solve_l0_penalized(&p, &cfg).unwrap();
        let u_star = p.unconstrained_minimizer().unwrap();
        let err = sol.u.iter().zip(&u_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert_eq!(sol.gap.gap, 0.0);
    }

    #[test]
    fn schedule_counts_reductions() {
        let p = poisson_prototype(8).unwrap();
        let cfg = L0PenaltyConfig {
            schedule_lambda: Some(0.9),
            ..L0PenaltyConfig::default()
        };
        let sol = solve_l0_penalized(&p, &cfg).unwrap();
        assert_eq!(sol.schedule_reductions, 14);
        assert!(sol.dc_iters >= 14);
        assert_eq!(sol.log[13].budget, 0.25);
        assert!(sol.log[12].budget > 0.25);
    }

    #[test]
    fn zero_start_with_zero_signs_stays_at_zero() {
        let p = poisson_prototype(8).unwrap();
        let cfg = L0PenaltyConfig {
            init: InitPolicy::Zero,
            ..L0PenaltyConfig::default()
        };
        let sol = solve_l0_penalized(&p, &cfg).unwrap();
        assert!(sol.u.iter().all(|&v| v == 0.0));
        assert_eq!(sol.dc_iters, 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let p = poisson_prototype(4).unwrap();
        for cfg in [
            L0PenaltyConfig { k: 0.0, ..L0PenaltyConfig::default() },
            L0PenaltyConfig { k: 2.0, ..L0PenaltyConfig::default() },
            L0PenaltyConfig { rho: -1.0, ..L0PenaltyConfig::default() },
            L0PenaltyConfig { schedule_lambda: Some(1.0), ..L0PenaltyConfig::default() },
        ] {
            assert!(matches!(solve_l0_penalized(&p, &cfg), Err(L0Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn small_penalty_leaves_positive_gap() {
        let sys = assemble(&TriMesh::structured(3).unwrap(), |_, _| 50.0).unwrap();
        let p = PoissonProblem::new(Arc::new(sys)).unwrap();
        // Two interior nodes' patches exceed the budget of a single element.
        let cfg = L0PenaltyConfig {
            k: 1.0 / 18.0,
            rho: 1e-3,
            ..L0PenaltyConfig::default()
        };
        let sol = solve_l0_penalized(&p, &cfg).unwrap();
        assert!(sol.gap.gap > 0.0);
        assert!(sol.l0 > cfg.k);
    }

    #[test]
    fn zero_vector_report_is_vacuous() {
        let p = poisson_prototype(6).unwrap();
        let r = optimality_report(&p, &vec![0.0; p.dim()], 1e9, 0.25).unwrap();
        assert_eq!(r.pairing, 0.0);
        assert_eq!((r.cond_inside, r.cond_outside, r.support_nodes), (0.0, 0.0, 0));
    }

    #[test]
    fn sweep_is_warm_started() {
        let p = poisson_prototype(8).unwrap();
        let entries = penalty_sweep(&p, &L0PenaltyConfig::default(), &[1e6, 1e9]).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(entries[1].solution.dc_iters <= 2);
        assert!(penalty_sweep(&p, &L0PenaltyConfig::default(), &[1e9, 1e6]).is_err());
    }
}
