//! Two-view siamese training: both augmented views pass through the same
//! encoder, the objective compares them column by column, and gradients from
//! both branches accumulate into the shared parameters.
//!
//! There is no predictor, stop-gradient or momentum encoder.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::linalg::Matrix;
use crate::model::{sgd_step, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Minimize `||z1 - z2||^2`.
    #[default]
    SquaredError,
    /// Maximize `cos(z1, z2)`, implemented as minimizing `1 - cos`.
    CosineSimilarity,
}

/// Objective value and its gradients with respect to both views.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad1: Matrix,
    pub grad2: Matrix,
}

fn check_pair(op: &'static str, z1: &Matrix, z2: &Matrix) -> Result<()> {
    if z1.shape() != z2.shape() {
        return Err(Error::dim(
            op,
            format!("{}x{} vs {}x{}", z1.rows(), z1.cols(), z2.rows(), z2.cols()),
        ));
    }
    if z1.cols() == 0 {
        return Err(Error::dim(op, "empty batch"));
    }
    Ok(())
}

/// Mean over columns of `||z1_b - z2_b||^2`; gradients `+-2 (z1 - z2) / B`.
pub fn se_loss(z1: &Matrix, z2: &Matrix) -> Result<PairLoss> {
    check_pair("se_loss", z1, z2)?;
    let b = z1.cols() as f64;
    let diff = z1.sub(z2)?;
    let value = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / b;
    let grad1 = diff.scale(2.0 / b);
    let grad2 = diff.scale(-2.0 / b);
    Ok(PairLoss { value, grad1, grad2 })
}

/// Mean cosine similarity of paired columns and its gradients.
///
/// For one pair, `d cos / d z1 = z2 / (|z1||z2|) - cos * z1 / |z1|^2`, and
/// symmetrically for `z2`. Every coordinate of the gradient depends on the
/// whole vector through the norms.
pub fn cos_loss(z1: &Matrix, z2: &Matrix) -> Result<PairLoss> {
    check_pair("cos_loss", z1, z2)?;
    let (d, b) = z1.shape();
    let mut grad1 = Matrix::zeros(d, b);
    let mut grad2 = Matrix::zeros(d, b);
    let mut total = 0.0;
    let scale = 1.0 / b as f64;
    for j in 0..b {
        let (mut n1, mut n2, mut dot) = (0.0, 0.0, 0.0);
        for i in 0..d {
            let (a, c) = (z1[(i, j)], z2[(i, j)]);
            n1 += a * a;
            n2 += c * c;
            dot += a * c;
        }
        if n1 == 0.0 || n2 == 0.0 {
            return Err(Error::ZeroNorm { column: j });
        }
        let (n1, n2) = (libm::sqrt(n1), libm::sqrt(n2));
        let cos = dot / (n1 * n2);
        total += cos;
        for i in 0..d {
            let (a, c) = (z1[(i, j)], z2[(i, j)]);
            grad1[(i, j)] = scale * (c / (n1 * n2) - cos * a / (n1 * n1));
            grad2[(i, j)] = scale * (a / (n1 * n2) - cos * c / (n2 * n2));
        }
    }
    Ok(PairLoss {
        value: total * scale,
        grad1,
        grad2,
    })
}

impl ObjectiveKind {
    /// The minimized loss: squared error, or `1 - mean cosine`.
    pub fn evaluate(self, z1: &Matrix, z2: &Matrix) -> Result<PairLoss> {
        match self {
            ObjectiveKind::SquaredError => se_loss(z1, z2),
            ObjectiveKind::CosineSimilarity => {
                let c = cos_loss(z1, z2)?;
                Ok(PairLoss {
                    value: 1.0 - c.value,
                    grad1: c.grad1.scale(-1.0),
                    grad2: c.grad2.scale(-1.0),
                })
            }
        }
    }
}

/// Two augmentations of the same `B` source samples, as `D_in x B` batches.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePairBatch {
    pub view1: Matrix,
    pub view2: Matrix,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Completed { loss: f64 },
    /// A normalization layer met vanishing variance; nothing was updated.
    Collapsed(Error),
}

/// Forward both views, backward both branches into the shared parameters,
/// then apply one SGD step at rate `lr`.
pub fn train_step(
    net: &mut Network,
    batch: &PositivePairBatch,
    objective: ObjectiveKind,
    opt: &Sgd,
    lr: f64,
) -> Result<StepOutcome> {
    if net.mode() != Mode::Train {
        return Err(Error::Config("train_step needs the network in training mode".into()));
    }
    net.zero_grad();
    let first = net.forward(&batch.view1);
    let second = first.and_then(|a| net.forward(&batch.view2).map(|b| (a, b)));
    let ((z1, c1), (z2, c2)) = match second {
        Ok(v) => v,
        Err(e) if e.is_collapse() => return Ok(StepOutcome::Collapsed(e)),
        Err(e) => return Err(e),
    };
    let loss = objective.evaluate(&z1, &z2)?;
    net.backward(&c1, &loss.grad1)?;
    net.backward(&c2, &loss.grad2)?;
    sgd_step(net, lr, opt.momentum, opt.weight_decay);
    Ok(StepOutcome::Completed { loss: loss.value })
}
