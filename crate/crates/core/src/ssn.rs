//! Semismooth Newton for `min ½uᵀHu − qᵀu + Σ_j c_j|u_j|`.
//!
//! The method drives the projected residual
//! `F_τ(u) = g − clamp(g − u/τ, −c, c)`, `g = Hu − q`, to zero by solving
//! principal subsystems on the active indices. The linear term may be given
//! as `q = smooth + tilt`; keeping the two apart lets the residual on active
//! indices be formed as `(Hu − smooth) − (tilt + σ)`, which avoids the
//! cancellation between large tilts and large thresholds.

use nalgebra_sparse::CsrMatrix;

use crate::error::{LinalgError, SsnError};
use crate::linalg::{
    conjugate_gradient, csr_matvec, csr_matvec_accurate, dot, norm2, norm_inf, principal_submatrix,
    SparseCholesky,
};

/// Symmetric positive definite operator `H`.
pub trait QuadraticOperator {
    fn dim(&self) -> usize;

    fn apply(&self, u: &[f64], out: &mut [f64]);

    /// `H u` used for residual evaluation; may be more accurate than [`apply`](Self::apply).
    fn apply_accurate(&self, u: &[f64], out: &mut [f64]) {
        self.apply(u, out);
    }

    /// Solves `H_AA x = rhs` on the principal block `index`.
    ///
    /// The default runs conjugate gradients on the restricted action.
    fn solve_principal(
        &self,
        index: &[usize],
        rhs: &[f64],
        warm: Option<&[f64]>,
    ) -> Result<Vec<f64>, SsnError> {
        let n = self.dim();
        let mut full = vec![0.0; n];
        let mut image = vec![0.0; n];
        let outcome = conjugate_gradient(
            |v, out| {
                full.iter_mut().for_each(|x| *x = 0.0);
                for (k, &i) in index.iter().enumerate() {
                    full[i] = v[k];
                }
                self.apply(&full, &mut image);
                for (k, &i) in index.iter().enumerate() {
                    out[k] = image[i];
                }
            },
            rhs,
            warm,
            1e-12,
            10 * index.len() + 100,
        );
        if !outcome.converged && !(outcome.residual_norm <= 1e-10 * norm2(rhs)) {
            return Err(SsnError::SingularPrincipal { size: index.len() });
        }
        Ok(outcome.x)
    }

    fn explicit(&self) -> Option<&CsrMatrix<f64>> {
        None
    }
}

/// Explicit sparse SPD matrix with direct principal solves.
#[derive(Debug)]
pub struct SparseOperator {
    matrix: CsrMatrix<f64>,
    full: SparseCholesky,
    refinement_steps: usize,
}

impl SparseOperator {
    pub fn new(matrix: CsrMatrix<f64>) -> Result<Self, LinalgError> {
        let full = SparseCholesky::factor(&matrix)?;
        Ok(Self {
            matrix,
            full,
            refinement_steps: 3,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    /// `H⁻¹ rhs` with iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.full.solve_refined(rhs, self.refinement_steps)
    }
}

impl QuadraticOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        csr_matvec(&self.matrix, u, out);
    }

    fn apply_accurate(&self, u: &[f64], out: &mut [f64]) {
        csr_matvec_accurate(&self.matrix, u, out);
    }

    fn solve_principal(
        &self,
        index: &[usize],
        rhs: &[f64],
        _warm: Option<&[f64]>,
    ) -> Result<Vec<f64>, SsnError> {
        if index.len() == self.dim() && index.iter().enumerate().all(|(k, &i)| k == i) {
            return Ok(self.solve(rhs));
        }
        let sub = principal_submatrix(&self.matrix, index);
        let chol = SparseCholesky::factor(&sub)
            .map_err(|_| SsnError::SingularPrincipal { size: index.len() })?;
        Ok(chol.solve_refined(rhs, self.refinement_steps))
    }

    fn explicit(&self) -> Option<&CsrMatrix<f64>> {
        Some(&self.matrix)
    }
}

/// Thresholds `c_j ≥ 0` of the weighted L1 term.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Weights {
    c: Vec<f64>,
}

impl L1Weights {
    pub fn new(c: Vec<f64>) -> Result<Self, SsnError> {
        if let Some(index) = c.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SsnError::InvalidWeight { index, value: c[index] });
        }
        Ok(Self { c })
    }

    /// `c_j = ρ·μ(△_j)`.
    pub fn scaled(rho: f64, patch: &[f64]) -> Result<Self, SsnError> {
        Self::new(patch.iter().map(|p| rho * p).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self { c: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn max(&self) -> f64 {
        norm_inf(&self.c)
    }

    /// `Σ c_j |u_j|`.
    pub fn penalty(&self, u: &[f64]) -> f64 {
        self.c.iter().zip(u).map(|(c, x)| c * x.abs()).sum()
    }
}

fn check_dims(n: usize, lens: &[usize]) -> Result<(), SsnError> {
    match lens.iter().find(|&&l| l != n) {
        Some(&found) => Err(SsnError::DimensionMismatch { expected: n, found }),
        None => Ok(()),
    }
}

/// Default τ from a warm start: `100·max|u0| / max c`, floored at 1e-16;
/// 1 when there is no L1 term.
pub fn default_tau(u0: &[f64], weights: &L1Weights) -> f64 {
    let cmax = weights.max();
    if cmax == 0.0 {
        return 1.0;
    }
    (100.0 * norm_inf(u0) / cmax).max(1e-16)
}

struct Classified {
    residual: Vec<f64>,
    /// `σ_i` for active indices, `None` for inactive ones.
    bound: Vec<Option<f64>>,
}

fn classify<H: QuadraticOperator + ?Sized>(
    h: &H,
    u: &[f64],
    smooth: &[f64],
    tilt: &[f64],
    c: &[f64],
    tau: f64,
    hu: &mut [f64],
) -> Classified {
    h.apply_accurate(u, hu);
    let n = u.len();
    let mut residual = vec![0.0; n];
    let mut bound = vec![None; n];
    for i in 0..n {
        let hs = hu[i] - smooth[i];
        let g = hs - tilt[i];
        let z = g - u[i] / tau;
        if z.abs() <= c[i] {
            residual[i] = u[i] / tau;
        } else {
            let sigma = z.signum() * c[i];
            residual[i] = hs - (tilt[i] + sigma);
            bound[i] = Some(sigma);
        }
    }
    Classified { residual, bound }
}

/// `F_τ(u)` for the problem with linear term `q`.
pub fn f_tau_residual<H: QuadraticOperator + ?Sized>(
    u: &[f64],
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    tau: f64,
) -> Result<Vec<f64>, SsnError> {
    if !(tau > 0.0) {
        return Err(SsnError::InvalidTau(tau));
    }
    check_dims(h.dim(), &[u.len(), q.len(), weights.len()])?;
    let zeros = vec![0.0; u.len()];
    let mut hu = vec![0.0; u.len()];
    Ok(classify(h, u, q, &zeros, weights.as_slice(), tau, &mut hu).residual)
}

/// `F_τ(u)` for the linear term `smooth + tilt`.
pub fn f_tau_residual_split<H: QuadraticOperator + ?Sized>(
    u: &[f64],
    h: &H,
    smooth: &[f64],
    tilt: &[f64],
    weights: &L1Weights,
    tau: f64,
) -> Result<Vec<f64>, SsnError> {
    if !(tau > 0.0) {
        return Err(SsnError::InvalidTau(tau));
    }
    check_dims(h.dim(), &[u.len(), smooth.len(), tilt.len(), weights.len()])?;
    let mut hu = vec![0.0; u.len()];
    Ok(classify(h, u, smooth, tilt, weights.as_slice(), tau, &mut hu).residual)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsnOptions {
    /// Fixed τ; `None` uses [`default_tau`] at the warm start.
    pub tau: Option<f64>,
    /// Stop when `‖F_τ‖₂ ≤ tol`.
    pub tol: f64,
    pub max_newton: usize,
    /// Consecutive non-decreasing steps before proximal-gradient fallback.
    pub stall_limit: usize,
}

impl Default for SsnOptions {
    fn default() -> Self {
        Self {
            tau: None,
            tol: 1e-14,
            max_newton: 100,
            stall_limit: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsnResult {
    pub u: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tau: f64,
    pub fallback_steps: usize,
}

/// Semismooth Newton with linear term `q`.
pub fn ssn_solve<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    u0: &[f64],
    opts: &SsnOptions,
) -> Result<SsnResult, SsnError> {
    ssn_solve_split(h, q, &vec![0.0; q.len()], weights, u0, opts)
}

/// Semismooth Newton with linear term `q = smooth + tilt`.
pub fn ssn_solve_split<H: QuadraticOperator + ?Sized>(
    h: &H,
    smooth: &[f64],
    tilt: &[f64],
    weights: &L1Weights,
    u0: &[f64],
    opts: &SsnOptions,
) -> Result<SsnResult, SsnError> {
    let n = h.dim();
    check_dims(n, &[smooth.len(), tilt.len(), weights.len(), u0.len()])?;
    let tau = opts.tau.unwrap_or_else(|| default_tau(u0, weights));
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(SsnError::InvalidTau(tau));
    }
    let c = weights.as_slice();
    let mut hu = vec![0.0; n];
    let mut u = u0.to_vec();
    let mut cls = classify(h, &u, smooth, tilt, c, tau, &mut hu);
    let mut norm = norm2(&cls.residual);
    let mut best = (norm, u.clone());
    let mut stalls = 0;
    let mut fallback_steps = 0;
    let mut iterations = 0;
    let mut prox_step: Option<f64> = None;

    while norm > opts.tol && iterations < opts.max_newton {
        iterations += 1;
        let active: Vec<usize> = (0..n).filter(|&i| cls.bound[i].is_some()).collect();
        let mut next = vec![0.0; n];
        if !active.is_empty() {
            let rhs: Vec<f64> = active
                .iter()
                .map(|&i| smooth[i] + (tilt[i] + cls.bound[i].unwrap()))
                .collect();
            let warm: Vec<f64> = active.iter().map(|&i| u[i]).collect();
            let sol = h.solve_principal(&active, &rhs, Some(&warm))?;
            for (k, &i) in active.iter().enumerate() {
                next[i] = sol[k];
            }
        }
        u = next;
        cls = classify(h, &u, smooth, tilt, c, tau, &mut hu);
        let new_norm = norm2(&cls.residual);
        stalls = if new_norm < norm { 0 } else { stalls + 1 };
        norm = new_norm;
        if norm < best.0 {
            best = (norm, u.clone());
        }
        if stalls >= opts.stall_limit && norm > opts.tol {
            let step = *prox_step.get_or_insert_with(|| 1.0 / lipschitz_estimate(h));
            let target = 0.5 * norm;
            let q: Vec<f64> = smooth.iter().zip(tilt).map(|(a, b)| a + b).collect();
            let mut grad = vec![0.0; n];
            for _ in 0..100_000 {
                h.apply(&u, &mut grad);
                for i in 0..n {
                    let v = u[i] - step * (grad[i] - q[i]);
                    u[i] = soft_threshold(v, step * c[i]);
                }
                fallback_steps += 1;
                cls = classify(h, &u, smooth, tilt, c, tau, &mut hu);
                norm = norm2(&cls.residual);
                if norm <= target {
                    break;
                }
            }
            stalls = 0;
            if norm < best.0 {
                best = (norm, u.clone());
            }
        }
    }
    let converged = norm <= opts.tol || best.0 <= opts.tol;
    let (residual_norm, u) = if norm <= best.0 { (norm, u) } else { best };
    Ok(SsnResult {
        u,
        residual_norm,
        iterations,
        converged,
        tau,
        fallback_steps,
    })
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Upper estimate of the largest eigenvalue of `H` by power iteration.
pub fn lipschitz_estimate<H: QuadraticOperator + ?Sized>(h: &H) -> f64 {
    let n = h.dim();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut hv = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nv = norm2(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        h.apply(&v, &mut hv);
        let next = dot(&v, &hv);
        std::mem::swap(&mut v, &mut hv);
        if (next - lambda).abs() <= 1e-6 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotients approach λ_max from below.
    1.1 * lambda.max(f64::MIN_POSITIVE)
}

/// Accelerated proximal gradient (with adaptive restart) iterated until the
/// proximal-gradient fixed-point residual `‖u − prox(u − (Hu − q)/L)‖∞`
/// drops below `tol`.
pub fn prox_grad_oracle<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SsnError> {
    let n = h.dim();
    check_dims(n, &[q.len(), weights.len()])?;
    let c = weights.as_slice();
    let step = 1.0 / lipschitz_estimate(h);
    let mut x = vec![0.0; n];
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut grad = vec![0.0; n];
    let prox = |point: &[f64], grad: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = soft_threshold(point[i] - step * (grad[i] - q[i]), step * c[i]);
        }
    };
    let mut next = vec![0.0; n];
    let mut check = vec![0.0; n];
    for it in 0..max_iter {
        h.apply(&y, &mut grad);
        prox(&y, &grad, &mut next);
        if it % 10 == 0 {
            h.apply(&next, &mut grad);
            prox(&next, &grad, &mut check);
            let fp = check.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if fp <= tol {
                return Ok(check);
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart when the momentum direction opposes progress.
        let restart = y
            .iter()
            .zip(&next)
            .zip(&x)
            .map(|((yi, ni), xi)| (yi - ni) * (ni - xi))
            .sum::<f64>()
            > 0.0;
        let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
        for i in 0..n {
            y[i] = next[i] + beta * (next[i] - x[i]);
        }
        t = if restart { 1.0 } else { t_next };
        std::mem::swap(&mut x, &mut next);
    }
    Err(SsnError::IterationCap(max_iter))
}

/// `½uᵀHu − qᵀu + Σ c_j|u_j|`.
pub fn l1_objective<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    u: &[f64],
) -> f64 {
    let mut hu = vec![0.0; u.len()];
    h.apply(u, &mut hu);
    0.5 * dot(u, &hu) - dot(q, u) + weights.penalty(u)
}

/// Largest violation of `|g_i| ≤ c_i` (zero entries) and
/// `g_i = −c_i sign(u_i)` (nonzero entries), `g = Hu − q`.
pub fn optimality_violation<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    u: &[f64],
) -> f64 {
    let mut hu = vec![0.0; u.len()];
    h.apply_accurate(u, &mut hu);
    let c = weights.as_slice();
    (0..u.len())
        .map(|i| {
            let g = hu[i] - q[i];
            if u[i] == 0.0 {
                (g.abs() - c[i]).max(0.0)
            } else {
                (g + c[i] * u[i].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}
