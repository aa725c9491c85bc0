//! Smooth quadratic model problems on an assembled [`FemSystem`].
//!
//! Every problem is of the form `f(u) = ½uᵀHu − q_smoothᵀu + const` over
//! the free degrees of freedom, with `H` exposed as a [`QuadraticOperator`].

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra_sparse::CsrMatrix;

use crate::error::ProblemError;
use crate::fem::FemSystem;
use crate::linalg::{csr_matvec, dot, dot2, SparseCholesky};
use crate::ssn::{QuadraticOperator, SparseOperator};

/// Load of the Poisson prototype, `10x·sin(5x)·sin(7y)`.
pub fn prototype_load(x: f64, y: f64) -> f64 {
    10.0 * x * (5.0 * x).sin() * (7.0 * y).sin()
}

/// Desired state of the control example, `(1/6)·sin(2πx)·sin(2πy)·exp(2x)`.
pub fn default_desired_state(x: f64, y: f64) -> f64 {
    (2.0 * PI * x).sin() * (2.0 * PI * y).sin() * (2.0 * x).exp() / 6.0
}

pub trait SmoothProblem: Send + Sync {
    type Hessian: QuadraticOperator + Sync;

    fn label(&self) -> &str;

    fn system(&self) -> &FemSystem;

    fn hessian(&self) -> &Self::Hessian;

    /// Linear term with `∇f(u) = Hu − q_smooth`.
    fn q_smooth(&self) -> &[f64];

    fn value(&self, u: &[f64]) -> f64;

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        self.hessian().apply(u, &mut g);
        for (gi, qi) in g.iter_mut().zip(self.q_smooth()) {
            *gi -= qi;
        }
        g
    }

    /// Minimizer of `f` without constraints, `H⁻¹ q_smooth`.
    fn unconstrained_minimizer(&self) -> Result<Vec<f64>, ProblemError>;

    /// Residual tolerance for the L1 subproblems of this problem.
    fn subproblem_tol(&self) -> f64 {
        1e-14
    }

    fn dim(&self) -> usize {
        self.q_smooth().len()
    }
}

/// `½uᵀAu − bᵀu` with stiffness `A` and load `b`.
#[derive(Debug)]
pub struct PoissonProblem {
    system: Arc<FemSystem>,
    op: SparseOperator,
    load: Vec<f64>,
}

impl PoissonProblem {
    pub fn new(system: Arc<FemSystem>) -> Result<Self, ProblemError> {
        let op = SparseOperator::new(system.stiffness.clone())?;
        let load = system.load.clone();
        Ok(Self { system, op, load })
    }
}

/// Poisson prototype on the unit square with the standard load.
pub fn poisson_prototype(n: usize) -> Result<PoissonProblem, ProblemError> {
    let mesh = crate::fem::TriMesh::structured(n)?;
    let system = crate::fem::assemble(&mesh, prototype_load)?;
    PoissonProblem::new(Arc::new(system))
}

impl SmoothProblem for PoissonProblem {
    type Hessian = SparseOperator;

    fn label(&self) -> &str {
        "poisson"
    }

    fn system(&self) -> &FemSystem {
        &self.system
    }

    fn hessian(&self) -> &SparseOperator {
        &self.op
    }

    fn q_smooth(&self) -> &[f64] {
        &self.load
    }

    fn value(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; u.len()];
        self.op.apply_accurate(u, &mut au);
        0.5 * dot2(u, &au) - dot2(&self.load, u)
    }

    fn unconstrained_minimizer(&self) -> Result<Vec<f64>, ProblemError> {
        Ok(self.op.solve(&self.load))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Desired state at every mesh node; `None` uses [`default_desired_state`].
    pub desired: Option<Vec<f64>>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-7,
            beta: 1e-7,
            desired: None,
        }
    }
}

/// `H v = M A⁻¹ M A⁻¹ M v + αMv + βAv` on the free degrees of freedom.
#[derive(Debug)]
pub struct ControlHessian {
    stiffness: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
    solver: SparseCholesky,
    alpha: f64,
    beta: f64,
}

impl ControlHessian {
    /// State `y = A⁻¹ M u`.
    pub fn state(&self, u: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; u.len()];
        csr_matvec(&self.mass, u, &mut mu);
        self.solver.solve_refined(&mu, 1)
    }

    /// `M A⁻¹ r`, the adjoint of the state map.
    pub fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        let p = self.solver.solve_refined(r, 1);
        let mut out = vec![0.0; r.len()];
        csr_matvec(&self.mass, &p, &mut out);
        out
    }
}

impl QuadraticOperator for ControlHessian {
    fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        let mut mv = vec![0.0; n];
        csr_matvec(&self.mass, v, &mut mv);
        let y = self.solver.solve(&mv);
        let mut my = vec![0.0; n];
        csr_matvec(&self.mass, &y, &mut my);
        let p = self.solver.solve(&my);
        csr_matvec(&self.mass, &p, out);
        let mut av = vec![0.0; n];
        csr_matvec(&self.stiffness, v, &mut av);
        for i in 0..n {
            out[i] += self.alpha * mv[i] + self.beta * av[i];
        }
    }
}

/// Reduced tracking problem `½‖y(u) − y_d‖²_M + (α/2)uᵀMu + (β/2)uᵀAu`.
#[derive(Debug)]
pub struct ControlProblem {
    system: Arc<FemSystem>,
    hessian: ControlHessian,
    /// Desired state over all nodes.
    desired: Vec<f64>,
    /// `Eᵀ M_full y_d` on the free degrees of freedom.
    desired_load: Vec<f64>,
    q_smooth: Vec<f64>,
    constant: f64,
    label: String,
}

pub fn control_reduced(system: Arc<FemSystem>, cfg: &ControlConfig) -> Result<ControlProblem, ProblemError> {
    if !(cfg.alpha > 0.0) || !(cfg.beta > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "alpha and beta must be positive (alpha = {}, beta = {})",
            cfg.alpha, cfg.beta
        )));
    }
    let desired = match &cfg.desired {
        Some(d) if d.len() != system.num_nodes() => {
            return Err(ProblemError::DimensionMismatch {
                expected: system.num_nodes(),
                found: d.len(),
            })
        }
        Some(d) => d.clone(),
        None => system.interpolate(default_desired_state),
    };
    let solver = SparseCholesky::factor(&system.stiffness)?;
    let hessian = ControlHessian {
        stiffness: system.stiffness.clone(),
        mass: system.mass.clone(),
        solver,
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    let mut m_yd = vec![0.0; system.num_nodes()];
    csr_matvec(&system.mass_full, &desired, &mut m_yd);
    let constant = 0.5 * dot2(&desired, &m_yd);
    let desired_load = system.restrict(&m_yd);
    let q_smooth = hessian.adjoint(&desired_load);
    Ok(ControlProblem {
        system,
        hessian,
        desired,
        desired_load,
        q_smooth,
        constant,
        label: format!("control(alpha={:e}, beta={:e})", cfg.alpha, cfg.beta),
    })
}

impl ControlProblem {
    /// State over all nodes.
    pub fn state(&self, u: &[f64]) -> Vec<f64> {
        self.system.embed(&self.hessian.state(u))
    }

    /// `‖y(u) − y_d‖` in the discrete L² norm.
    pub fn tracking_error(&self, u: &[f64]) -> f64 {
        let diff: Vec<f64> = self
            .state(u)
            .iter()
            .zip(&self.desired)
            .map(|(y, d)| y - d)
            .collect();
        let mut md = vec![0.0; diff.len()];
        csr_matvec(&self.system.mass_full, &diff, &mut md);
        dot(&diff, &md).max(0.0).sqrt()
    }

    pub fn desired(&self) -> &[f64] {
        &self.desired
    }
}

impl SmoothProblem for ControlProblem {
    type Hessian = ControlHessian;

    fn label(&self) -> &str {
        &self.label
    }

    fn system(&self) -> &FemSystem {
        &self.system
    }

    fn hessian(&self) -> &ControlHessian {
        &self.hessian
    }

    fn q_smooth(&self) -> &[f64] {
        &self.q_smooth
    }

    fn value(&self, u: &[f64]) -> f64 {
        let y = self.hessian.state(u);
        let mut my = vec![0.0; y.len()];
        csr_matvec(&self.system.mass, &y, &mut my);
        let mut mu = vec![0.0; u.len()];
        csr_matvec(&self.system.mass, u, &mut mu);
        let mut au = vec![0.0; u.len()];
        csr_matvec(&self.system.stiffness, u, &mut au);
        0.5 * dot2(&y, &my) - dot2(&y, &self.desired_load)
            + self.constant
            + 0.5 * self.hessian.alpha * dot2(u, &mu)
            + 0.5 * self.hessian.beta * dot2(u, &au)
    }

    /// Adjoint gradient `M A⁻¹ (M y − Eᵀ M y_d) + αMu + βAu`.
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let y = self.hessian.state(u);
        let mut my = vec![0.0; y.len()];
        csr_matvec(&self.system.mass, &y, &mut my);
        let residual: Vec<f64> = my.iter().zip(&self.desired_load).map(|(a, b)| a - b).collect();
        let mut g = self.hessian.adjoint(&residual);
        let mut mu = vec![0.0; u.len()];
        csr_matvec(&self.system.mass, u, &mut mu);
        let mut au = vec![0.0; u.len()];
        csr_matvec(&self.system.stiffness, u, &mut au);
        for i in 0..g.len() {
            g[i] += self.hessian.alpha * mu[i] + self.hessian.beta * au[i];
        }
        g
    }

    fn unconstrained_minimizer(&self) -> Result<Vec<f64>, ProblemError> {
        let out = crate::linalg::conjugate_gradient(
            |v, out| self.hessian.apply(v, out),
            &self.q_smooth,
            None,
            1e-13,
            20 * self.q_smooth.len() + 1000,
        );
        Ok(out.x)
    }

    fn subproblem_tol(&self) -> f64 {
        1e-10 * crate::linalg::norm2(&self.q_smooth)
    }
}
