//! Small dense-vector kernels, CSR helpers, a sparse Cholesky wrapper and
//! conjugate gradients.
//!
//! Sparse storage and the Cholesky factorization come from `nalgebra-sparse`;
//! everything here is glue that lets the solvers work on plain `&[f64]`.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::LinalgError;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Dot product evaluated in twice the working precision (Ogita, Rump, Oishi).
pub fn dot2(x: &[f64], y: &[f64]) -> f64 {
    let mut p = 0.0_f64;
    let mut s = 0.0_f64;
    for (&a, &b) in x.iter().zip(y) {
        let h = a * b;
        let r = a.mul_add(b, -h);
        let t = p + h;
        let z = t - p;
        let q = (p - (t - z)) + (h - z);
        p = t;
        s += q + r;
    }
    p + s
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// `y = A x` for a CSR matrix.
pub fn csr_matvec(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(a.nrows(), y.len());
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for p in offsets[i]..offsets[i + 1] {
            acc += vals[p] * x[cols[p]];
        }
        *yi = acc;
    }
}

/// `y = A x` with every row reduction carried out by [`dot2`].
pub fn csr_matvec_accurate(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    let mut gathered = Vec::new();
    for (i, yi) in y.iter_mut().enumerate() {
        let range = offsets[i]..offsets[i + 1];
        gathered.clear();
        gathered.extend(cols[range.clone()].iter().map(|&c| x[c]));
        *yi = dot2(&vals[range], &gathered);
    }
}

/// `y = Aᵀ x` for a CSR matrix.
pub fn csr_matvec_transpose(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.nrows(), x.len());
    debug_assert_eq!(a.ncols(), y.len());
    y.iter_mut().for_each(|v| *v = 0.0);
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for (i, xi) in x.iter().enumerate() {
        for p in offsets[i]..offsets[i + 1] {
            y[cols[p]] += vals[p] * xi;
        }
    }
}

/// Rows and columns of `a` listed in `index` (in that order).
pub fn principal_submatrix(a: &CsrMatrix<f64>, index: &[usize]) -> CsrMatrix<f64> {
    let mut position = vec![usize::MAX; a.ncols()];
    for (local, &global) in index.iter().enumerate() {
        position[global] = local;
    }
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    let mut coo = CooMatrix::new(index.len(), index.len());
    for (local_row, &row) in index.iter().enumerate() {
        for p in offsets[row]..offsets[row + 1] {
            let local_col = position[cols[p]];
            if local_col != usize::MAX {
                coo.push(local_row, local_col, vals[p]);
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Largest absolute asymmetry `|a_ij - a_ji|` over the stored pattern.
pub fn asymmetry(a: &CsrMatrix<f64>) -> f64 {
    let t = a.transpose();
    let diff = a - &t;
    diff.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Cholesky factorization of a sparse symmetric positive definite matrix.
pub struct SparseCholesky {
    matrix: CsrMatrix<f64>,
    factor: CscCholesky<f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky")
            .field("dim", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl SparseCholesky {
    pub fn factor(matrix: &CsrMatrix<f64>) -> Result<Self, LinalgError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(LinalgError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let csc = CscMatrix::from(matrix);
        let factor = CscCholesky::factor(&csc).map_err(|_| LinalgError::NotPositiveDefinite)?;
        Ok(Self {
            matrix: matrix.clone(),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        self.factor.solve_mut(&mut b);
        b.as_slice().to_vec()
    }

    /// Solve followed by `steps` rounds of iterative refinement with
    /// residuals computed in doubled precision.
    pub fn solve_refined(&self, rhs: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(rhs);
        let mut ax = vec![0.0; x.len()];
        for _ in 0..steps {
            csr_matvec_accurate(&self.matrix, &x, &mut ax);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
            if norm_inf(&r) == 0.0 {
                break;
            }
            let dx = self.solve(&r);
            axpy(1.0, &dx, &mut x);
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradients for `A x = b` with `A` given as an action.
///
/// Stops once `‖b − A x‖₂ ≤ tol · ‖b‖₂` (or `‖b‖₂ = 0`).
pub fn conjugate_gradient<F>(
    mut apply: F,
    rhs: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        };
    }
    let target = tol * rhs_norm;
    let mut ap = vec![0.0; n];
    apply(&x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, v)| b - v).collect();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return CgOutcome {
            x,
            iterations: 0,
            residual_norm: rr.sqrt(),
            converged: true,
        };
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return CgOutcome {
                x,
                iterations: it,
                residual_norm: rr.sqrt(),
                converged: false,
            };
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return CgOutcome {
                x,
                iterations: it,
                residual_norm: rr_new.sqrt(),
                converged: true,
            };
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    CgOutcome {
        x,
        iterations: max_iter,
        residual_norm: rr.sqrt(),
        converged: false,
    }
}
