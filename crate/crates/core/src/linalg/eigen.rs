use alloc::format;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

/// Maximum number of full cyclic sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Convergence threshold on the off-diagonal Frobenius norm, relative to the
/// Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `A = Q diag(values) Q^T` with eigenvalues sorted descending and the
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// `Q diag(f(lambda)) Q^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let q = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q[(i, k)] * fl[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }
}

/// Symmetric eigendecomposition by the cyclic Jacobi rotation method.
///
/// Each sweep visits every off-diagonal pair `(p, q)` once and applies the
/// plane rotation that zeroes `a[p][q]`; rotations are accumulated into `Q`.
/// Iteration stops once the off-diagonal mass falls below
/// [`JACOBI_TOLERANCE`] times the input norm.
///
/// Eigenvalues come back in descending order. Each eigenvector is signed so
/// that its largest-magnitude component is positive (first one on ties).
pub fn sym_eig(a: &Matrix) -> Result<EigenDecomposition> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("sym_eig", format!("{}x{} is not square", n, a.cols())));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if !(d <= SYMMETRY_TOLERANCE * scale) {
                return Err(Error::dim(
                    "sym_eig",
                    format!("not symmetric at ({i},{j}): difference {d:e}"),
                ));
            }
        }
    }

    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut q = Matrix::identity(n);
    let target = JACOBI_TOLERANCE * m.frobenius_norm();

    let mut converged = false;
    let mut off = off_diagonal_norm(&m);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                rotate(&mut m, &mut q, p, r);
            }
        }
        off = off_diagonal_norm(&m);
    }
    if !converged && off > target {
        return Err(Error::Convergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off_diagonal: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = q.select_cols(&order);
    for k in 0..n {
        let mut pivot = 0;
        for i in 1..n {
            if vectors[(i, k)].abs() > vectors[(pivot, k)].abs() {
                pivot = i;
            }
        }
        if vectors[(pivot, k)] < 0.0 {
            for i in 0..n {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    libm::sqrt(s)
}

fn rotate(m: &mut Matrix, q: &mut Matrix, p: usize, r: usize) {
    let apr = m[(p, r)];
    if apr == 0.0 {
        return;
    }
    let n = m.rows();
    let theta = (m[(r, r)] - m[(p, p)]) / (2.0 * apr);
    let t = {
        let t = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    let s = t * c;

    m[(p, p)] -= t * apr;
    m[(r, r)] += t * apr;
    m[(p, r)] = 0.0;
    m[(r, p)] = 0.0;
    for k in 0..n {
        if k == p || k == r {
            continue;
        }
        let akp = m[(k, p)];
        let akr = m[(k, r)];
        let new_kp = c * akp - s * akr;
        let new_kr = s * akp + c * akr;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, r)] = new_kr;
        m[(r, k)] = new_kr;
    }
    for k in 0..n {
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = c * qkp - s * qkr;
        q[(k, r)] = s * qkp + c * qkr;
    }
}

/// Singular values in descending order, as square roots of the eigenvalues
/// of the smaller of `X X^T` and `X^T X`. Tiny negative eigenvalues from
/// rounding are clamped to zero.
pub fn singular_values(x: &Matrix) -> Result<Vec<f64>> {
    let gram = if x.rows() <= x.cols() {
        x.gram()
    } else {
        x.transpose().gram()
    };
    let eig = sym_eig(&gram)?;
    Ok(eig.values.iter().map(|&l| libm::sqrt(l.max(0.0))).collect())
}
