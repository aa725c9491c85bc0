//! SpaRSA: Barzilai–Borwein proximal gradient with nonmonotone acceptance
//! for `φ(u) = ½uᵀHu − qᵀu + Σ_j w_j|u_j|`.

use std::collections::VecDeque;

use crate::error::SparsaError;
use crate::linalg::{dot, norm2};
use crate::ssn::{soft_threshold, L1Weights, QuadraticOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsaConfig {
    /// Nonmonotone window.
    pub m: usize,
    pub eta: f64,
    pub sigma: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha0: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SparsaConfig {
    fn default() -> Self {
        Self {
            m: 5,
            eta: 2.0,
            sigma: 0.01,
            alpha_min: 1e-20,
            alpha_max: 1e20,
            alpha0: 1.0,
            rel_tol: 1e-5,
            max_iter: 20_000,
        }
    }
}

impl SparsaConfig {
    fn validate(&self) -> Result<(), SparsaError> {
        let ok = self.m >= 1
            && self.eta > 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0
            && self.alpha_min > 0.0
            && self.alpha_min <= self.alpha_max
            && self.alpha0 > 0.0
            && self.rel_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SparsaError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparsaResult {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    /// Step parameter of the last accepted step.
    pub alpha: f64,
    /// Objective values of all accepted iterates, starting with `φ(u0)`.
    pub history: Vec<f64>,
}

/// L1 weights `β·∫φ_j` for the lumped norm `β‖u_h‖_{1,h}`.
pub fn lumped_l1_weights(beta: f64, basis_integral: &[f64]) -> Result<L1Weights, SparsaError> {
    L1Weights::new(basis_integral.iter().map(|b| beta * b).collect())
        .map_err(|e| SparsaError::InvalidConfig(e.to_string()))
}

fn phi(hu: &[f64], q: &[f64], weights: &L1Weights, u: &[f64]) -> f64 {
    0.5 * dot(u, hu) - dot(q, u) + weights.penalty(u)
}

pub fn sparsa_solve<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    cfg: &SparsaConfig,
    u0: &[f64],
) -> Result<SparsaResult, SparsaError> {
    cfg.validate()?;
    let n = h.dim();
    for len in [q.len(), weights.len(), u0.len()] {
        if len != n {
            return Err(SparsaError::DimensionMismatch { expected: n, found: len });
        }
    }
    let w = weights.as_slice();
    let mut u = u0.to_vec();
    let mut hu = vec![0.0; n];
    h.apply(&u, &mut hu);
    let mut grad: Vec<f64> = hu.iter().zip(q).map(|(a, b)| a - b).collect();
    let mut value = phi(&hu, q, weights, &u);
    let mut window: VecDeque<f64> = VecDeque::from([value]);
    let mut history = vec![value];
    let mut alpha = cfg.alpha0.clamp(cfg.alpha_min, cfg.alpha_max);
    let mut next = vec![0.0; n];
    let mut h_next = vec![0.0; n];

    for it in 1..=cfg.max_iter {
        let reference = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (next_value, step_sq) = loop {
            for i in 0..n {
                next[i] = soft_threshold(u[i] - grad[i] / alpha, w[i] / alpha);
            }
            let step_sq: f64 = next.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            h.apply(&next, &mut h_next);
            let candidate = phi(&h_next, q, weights, &next);
            if candidate <= reference - 0.5 * cfg.sigma * alpha * step_sq || alpha >= cfg.alpha_max {
                break (candidate, step_sq);
            }
            alpha = (cfg.eta * alpha).min(cfg.alpha_max);
        };
        let grad_next: Vec<f64> = h_next.iter().zip(q).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = grad_next.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let du: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();

        let rel_change = if value != 0.0 {
            (next_value - value).abs() / value.abs()
        } else {
            (next_value - value).abs()
        };
        let next_norm = norm2(&next);
        let rel_step = if next_norm > 0.0 {
            step_sq.sqrt() / next_norm
        } else {
            step_sq.sqrt()
        };
        let accepted_alpha = alpha;

        std::mem::swap(&mut u, &mut next);
        std::mem::swap(&mut hu, &mut h_next);
        grad = grad_next;
        value = next_value;
        history.push(value);
        window.push_back(value);
        if window.len() > cfg.m {
            window.pop_front();
        }
        if rel_change <= cfg.rel_tol && rel_step <= cfg.rel_tol {
            return Ok(SparsaResult {
                u,
                iterations: it,
                objective: value,
                alpha: accepted_alpha,
                history,
            });
        }
        let ss = dot(&du, &du);
        if ss > 0.0 {
            alpha = (dot(&dg, &du) / ss).clamp(cfg.alpha_min, cfg.alpha_max);
        }
    }
    Err(SparsaError::IterationCap(cfg.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{poisson_prototype, SmoothProblem};
    use crate::ssn::{f_tau_residual, SparseOperator};
    use nalgebra_sparse::{CooMatrix, CsrMatrix};

    fn op(rows: &[&[f64]]) -> SparseOperator {
        let n = rows.len();
        let mut coo = CooMatrix::new(n, n);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                coo.push(i, j, v);
            }
        }
        SparseOperator::new(CsrMatrix::from(&coo)).unwrap()
    }

    #[test]
    fn scalar_soft_threshold_fixed_point() {
        let h = op(&[&[2.0]]);
        let w = L1Weights::new(vec![1.0]).unwrap();
        let cfg = SparsaConfig { rel_tol: 1e-12, ..SparsaConfig::default() };
        let r = sparsa_solve(&h, &[3.0], &w, &cfg, &[0.0]).unwrap();
        assert!((r.u[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn no_weights_is_gradient_descent_to_solution() {
        let h = op(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let cfg = SparsaConfig { rel_tol: 1e-12, ..SparsaConfig::default() };
        let r = sparsa_solve(&h, &[1.0, 2.0], &L1Weights::zeros(2), &cfg, &[0.0, 0.0]).unwrap();
        assert!((r.u[0] - 1.0 / 11.0).abs() < 1e-9);
        assert!((r.u[1] - 7.0 / 11.0).abs() < 1e-9);
    }

    #[test]
    fn acceptance_only_uses_window() {
        let p = poisson_prototype(8).unwrap();
        let w = lumped_l1_weights(2.0, &p.system().restrict(&p.system().basis_integral)).unwrap();
        let u0 = p.unconstrained_minimizer().unwrap();
        let cfg = SparsaConfig::default();
        let r = sparsa_solve(p.hessian(), p.q_smooth(), &w, &cfg, &u0).unwrap();
        for k in 1..r.history.len() {
            let start = k.saturating_sub(cfg.m);
            let reference = r.history[start..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(r.history[k] <= reference);
        }
        let f = f_tau_residual(&r.u, p.hessian(), p.q_smooth(), &w, 1.0 / r.alpha).unwrap();
        assert!(norm2(&f) <= 1e-6 * (1.0 + norm2(p.q_smooth())));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let h = op(&[&[1.0]]);
        let cfg = SparsaConfig { eta: 0.5, ..SparsaConfig::default() };
        assert!(sparsa_solve(&h, &[1.0], &L1Weights::zeros(1), &cfg, &[0.0]).is_err());
    }
}
