//! Small dense complex blocks.
//!
//! Lattice fields keep their `n x n` blocks in flat row-major storage so the
//! hot loops avoid per-node allocation; the public surface hands out
//! `nalgebra` matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.singular_values().max()
}

/// Operator 2-norm of a flat row-major `n x n` block.
pub fn op_norm_flat(a: &[C64], n: usize) -> f64 {
    if n == 1 {
        return a[0].norm();
    }
    op_norm(&to_matrix(a, n))
}

pub fn frobenius_flat(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(a: &[C64]) -> f64 {
    frobenius_flat(a)
}

pub fn to_matrix(a: &[C64], n: usize) -> CMatrix {
    CMatrix::from_row_slice(n, n, a)
}

pub fn to_flat(m: &CMatrix) -> Vec<C64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// `out += alpha * a * b` for flat row-major blocks.
#[inline]
pub fn mul_acc(out: &mut [C64], a: &[C64], b: &[C64], n: usize, alpha: f64) {
    if n == 1 {
        out[0] += a[0] * b[0] * alpha;
        return;
    }
    for r in 0..n {
        for k in 0..n {
            let ark = a[r * n + k] * alpha;
            if ark == ZERO {
                continue;
            }
            for c in 0..n {
                out[r * n + c] += ark * b[k * n + c];
            }
        }
    }
}

/// `out = a * b`.
#[inline]
pub fn mul_into(out: &mut [C64], a: &[C64], b: &[C64], n: usize) {
    out.iter_mut().for_each(|z| *z = ZERO);
    mul_acc(out, a, b, n, 1.0);
}

/// `out += alpha * a * x` with `x` a vector of length `n`.
#[inline]
pub fn mul_vec_acc(out: &mut [C64], a: &[C64], x: &[C64], n: usize, alpha: C64) {
    for r in 0..n {
        let mut s = ZERO;
        for c in 0..n {
            s += a[r * n + c] * x[c];
        }
        out[r] += s * alpha;
    }
}

/// `out += alpha * a`.
#[inline]
pub fn axpy(out: &mut [C64], a: &[C64], alpha: f64) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += x * alpha;
    }
}

pub fn identity_flat(n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for d in 0..n {
        out[d * n + d] = C64::new(1.0, 0.0);
    }
    out
}

/// Asymmetry `|a - a*|` of a square matrix, operator norm.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    op_norm(&(m - m.adjoint()))
}

/// Principal square root of a Hermitian positive definite matrix.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut d = CMatrix::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = C64::new(eig.eigenvalues[k].sqrt(), 0.0);
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    herm.symmetric_eigen().eigenvalues.min()
}
