use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Rows whose batch variance falls below this are treated as constant when
/// `epsilon == 0`.
pub const MIN_VARIANCE: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnConfig {
    pub epsilon: f64,
    pub affine: bool,
    /// Weight of the previous running estimate in the moving average.
    pub running_momentum: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        BnConfig {
            epsilon: 0.0,
            affine: false,
            running_momentum: 0.9,
        }
    }
}

impl BnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("batch norm epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.running_momentum) {
            return Err(Error::Config(format!(
                "batch norm running momentum must be in [0, 1], got {}",
                self.running_momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    mode: Mode,
    /// Standardized input `(x - mu) / sqrt(var + eps)`.
    normalized: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads {
    pub dx: Matrix,
    pub dgamma: Option<Matrix>,
    pub dbeta: Option<Matrix>,
}

/// Per-row batch normalization, `y = gamma * (x - mu) / sqrt(var + eps) + beta`.
///
/// Variances use the population convention (divide by `B`). With affine off
/// the output row variance in training mode is `var / (var + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub config: BnConfig,
    pub gamma: Option<Param>,
    pub beta: Option<Param>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize, config: BnConfig) -> Result<Self> {
        config.validate()?;
        let (gamma, beta) = if config.affine {
            (
                Some(Param::new(Matrix::filled(dim, 1, 1.0))),
                Some(Param::new(Matrix::zeros(dim, 1))),
            )
        } else {
            (None, None)
        };
        Ok(BatchNorm {
            config,
            gamma,
            beta,
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, BnCache)> {
        let d = self.dim();
        if x.rows() != d {
            return Err(Error::dim("bn_forward", format!("{} rows, layer has {d}", x.rows())));
        }
        let eps = self.config.epsilon;
        let b = x.cols();
        let (means, vars) = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(Error::dim("bn_forward", "training mode needs at least 2 samples"));
                }
                let (means, vars) = row_stats(x);
                let m = self.config.running_momentum;
                for i in 0..d {
                    self.running_mean[i] = m * self.running_mean[i] + (1.0 - m) * means[i];
                    self.running_var[i] = m * self.running_var[i] + (1.0 - m) * vars[i];
                }
                (means, vars)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };

        let mut inv_std = Vec::with_capacity(d);
        for (row, &var) in vars.iter().enumerate() {
            if eps == 0.0 && var < MIN_VARIANCE {
                return Err(Error::DegenerateVariance { row, variance: var });
            }
            inv_std.push(1.0 / libm::sqrt(var + eps));
        }

        let mut normalized = x.clone();
        for i in 0..d {
            let (mu, s) = (means[i], inv_std[i]);
            for v in normalized.row_mut(i) {
                *v = (*v - mu) * s;
            }
        }
        let mut y = normalized.clone();
        if let (Some(gamma), Some(beta)) = (&self.gamma, &self.beta) {
            for i in 0..d {
                let (g, bt) = (gamma.value[(i, 0)], beta.value[(i, 0)]);
                for v in y.row_mut(i) {
                    *v = g * *v + bt;
                }
            }
        }
        Ok((
            y,
            BnCache {
                mode,
                normalized,
                inv_std,
            },
        ))
    }

    pub fn backward(&self, cache: &BnCache, dy: &Matrix) -> Result<BnGrads> {
        bn_backward(cache, self.gamma.as_ref().map(|p| &p.value), dy)
    }
}

/// Gradient of the batch-norm forward that produced `cache`.
///
/// In training mode the dependence of the batch mean and variance on the
/// input is included:
/// `dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))` with `g = gamma * dy`.
pub fn bn_backward(cache: &BnCache, gamma: Option<&Matrix>, dy: &Matrix) -> Result<BnGrads> {
    let xhat = &cache.normalized;
    if dy.shape() != xhat.shape() {
        return Err(Error::dim("bn_backward", "upstream gradient shape"));
    }
    let (d, b) = xhat.shape();
    let n = b as f64;
    let mut dx = Matrix::zeros(d, b);
    let mut dgamma = Matrix::zeros(d, 1);
    let mut dbeta = Matrix::zeros(d, 1);
    for i in 0..d {
        let g = gamma.map_or(1.0, |gm| gm[(i, 0)]);
        let dyr = dy.row(i);
        let xr = xhat.row(i);
        dgamma[(i, 0)] = dyr.iter().zip(xr).map(|(a, x)| a * x).sum();
        dbeta[(i, 0)] = dyr.iter().sum();
        let s = cache.inv_std[i];
        let out = dx.row_mut(i);
        match cache.mode {
            Mode::Train => {
                let mean_g = g * dbeta[(i, 0)] / n;
                let mean_gx = g * dgamma[(i, 0)] / n;
                for k in 0..b {
                    out[k] = s * (g * dyr[k] - mean_g - xr[k] * mean_gx);
                }
            }
            Mode::Eval => {
                for k in 0..b {
                    out[k] = s * g * dyr[k];
                }
            }
        }
    }
    let affine = gamma.is_some();
    Ok(BnGrads {
        dx,
        dgamma: affine.then_some(dgamma),
        dbeta: affine.then_some(dbeta),
    })
}

/// Population mean and variance of every row.
pub(crate) fn row_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.cols() as f64;
    let mut means = Vec::with_capacity(x.rows());
    let mut vars = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let r = x.row(i);
        let m = r.iter().sum::<f64>() / n;
        let v = r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        means.push(m);
        vars.push(v);
    }
    (means, vars)
}
