//! Collapse indicators and frozen-feature evaluation.
//!
//! All functions take features in the `D x B` layout.

mod probe;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Matrix};

pub use probe::{knn_eval, linear_probe, ProbeConfig, DEFAULT_KNN_K};

/// Rows with variance below this are excluded from the correlation matrix.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-12;
/// Singular values at or below this fraction of the largest are not counted.
pub const DEFAULT_RANK_TOL: f64 = 1e-3;
pub const DEFAULT_DIAGNOSTIC_BATCH: usize = 512;

fn need_two_columns(op: &'static str, z: &Matrix) -> Result<()> {
    if z.cols() < 2 {
        return Err(Error::dim(op, format!("need at least 2 samples, got {}", z.cols())));
    }
    Ok(())
}

fn row_variances(z: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let b = z.cols() as f64;
    let means = z.row_means();
    let vars = (0..z.rows())
        .map(|i| z.row(i).iter().map(|v| (v - means[i]) * (v - means[i])).sum::<f64>() / b)
        .collect();
    (means, vars)
}

/// Population standard deviation of every row, and their mean.
pub fn feature_std(z: &Matrix) -> Result<(Vec<f64>, f64)> {
    need_two_columns("feature_std", z)?;
    let (_, vars) = row_variances(z);
    let stds: Vec<f64> = vars.iter().map(|&v| libm::sqrt(v)).collect();
    let mean = if stds.is_empty() {
        0.0
    } else {
        stds.iter().sum::<f64>() / stds.len() as f64
    };
    Ok((stds, mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// Mean absolute off-diagonal Pearson correlation over usable rows.
    pub avg_corr: f64,
    /// Rows dropped for having variance below the floor.
    pub excluded_dims: usize,
}

/// Average correlation strength between feature dimensions.
pub fn avg_corr(z: &Matrix, var_floor: f64) -> Result<Correlation> {
    need_two_columns("avg_corr", z)?;
    let (means, vars) = row_variances(z);
    let usable: Vec<usize> = (0..z.rows()).filter(|&i| vars[i] >= var_floor).collect();
    let excluded_dims = z.rows() - usable.len();
    if usable.len() < 2 {
        return Err(Error::InsufficientVariance {
            usable: usable.len(),
        });
    }
    let b = z.cols() as f64;
    let standardized: Vec<Vec<f64>> = usable
        .iter()
        .map(|&i| {
            let s = libm::sqrt(vars[i]);
            z.row(i).iter().map(|v| (v - means[i]) / s).collect()
        })
        .collect();
    let mut total = 0.0;
    let n = usable.len();
    for a in 0..n {
        for c in (a + 1)..n {
            let r = crate::linalg::dot(&standardized[a], &standardized[c]) / b;
            total += r.clamp(-1.0, 1.0).abs();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(Correlation {
        avg_corr: total / pairs,
        excluded_dims,
    })
}

/// Number of singular values of the row-centered features above
/// `rel_tol` times the largest one.
pub fn effective_rank(z: &Matrix, rel_tol: f64) -> Result<usize> {
    if z.rows() == 0 || z.cols() == 0 {
        return Ok(0);
    }
    let (centered, _) = z.center_rows();
    let s = singular_values(&centered)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * top).count())
}

/// One diagnostic snapshot of a projection batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub epoch: usize,
    pub loss: f64,
    pub per_dim_std: Vec<f64>,
    pub mean_std: f64,
    /// `None` when fewer than two dimensions keep usable variance.
    pub avg_corr: Option<f64>,
    pub effective_rank: usize,
    pub excluded_dims: usize,
    pub knn_acc: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str = "epoch,loss,mean_std,avg_corr,effective_rank,excluded_dims,knn_acc";

fn csv_float(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::from("nan"),
    }
}

impl CollapseReport {
    pub fn measure(epoch: usize, loss: f64, z: &Matrix, var_floor: f64, rank_tol: f64) -> Result<Self> {
        let (per_dim_std, mean_std) = feature_std(z)?;
        let (avg_corr, excluded_dims) = match avg_corr(z, var_floor) {
            Ok(c) => (Some(c.avg_corr), c.excluded_dims),
            Err(Error::InsufficientVariance { usable }) => (None, z.rows() - usable),
            Err(e) => return Err(e),
        };
        Ok(CollapseReport {
            epoch,
            loss,
            per_dim_std,
            mean_std,
            avg_corr,
            effective_rank: effective_rank(z, rank_tol)?,
            excluded_dims,
            knn_acc: None,
        })
    }

    /// The row matching [`REPORT_CSV_HEADER`]; missing values print as `nan`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.loss,
            self.mean_std,
            csv_float(self.avg_corr),
            self.effective_rank,
            self.excluded_dims,
            csv_float(self.knn_acc)
        )
    }
}
