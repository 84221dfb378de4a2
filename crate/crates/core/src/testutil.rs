//! Oracles shared by the unit tests. Nothing here calls into the code under test.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn numeric_grad(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for idx in 0..x.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + h;
        let fp = f(&probe);
        probe.as_mut_slice()[idx] = orig - h;
        let fm = f(&probe);
        probe.as_mut_slice()[idx] = orig;
        g.as_mut_slice()[idx] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Largest elementwise relative error, with the denominator floored at 1e-3.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

pub fn population_variance(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let m = row.iter().sum::<f64>() / n;
    row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

#[allow(dead_code)]
pub fn collect_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}
