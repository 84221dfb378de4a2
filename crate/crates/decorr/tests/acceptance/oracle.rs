//! Reference computations written independently of the code under test.

use decorr_core::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `Y Y^T` by triple loop.
pub fn gram(y: &Matrix) -> Vec<Vec<f64>> {
    let (d, b) = y.shape();
    let mut g = vec![vec![0.0; d]; d];
    for (i, gi) in g.iter_mut().enumerate() {
        for (j, gij) in gi.iter_mut().enumerate() {
            *gij = (0..b).map(|k| y[(i, k)] * y[(j, k)]).sum();
        }
    }
    g
}

pub fn frobenius_from_identity(g: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let e = v - if i == j { 1.0 } else { 0.0 };
            s += e * e;
        }
    }
    s.sqrt()
}

pub fn population_variance(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let m = row.iter().sum::<f64>() / n;
    row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Central differences of a scalar function of a matrix.
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

/// Largest elementwise `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
