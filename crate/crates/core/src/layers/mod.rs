//! Differentiable layers with explicit forward and backward passes.
//!
//! All layers take and return `D x B` feature batches. Forward calls return a
//! cache that the matching backward call consumes; backward functions are pure
//! and hand parameter gradients back to the caller instead of mutating state.

mod batch_norm;
mod linear;
mod relu;
mod whitening;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use batch_norm::{bn_backward, BatchNorm, BnCache, BnConfig, BnGrads};
pub use linear::{linear_backward, linear_forward, Linear, LinearCache, LinearGrads};
pub use relu::{relu_backward, relu_forward, ReluCache};
pub use whitening::{
    dbn_backward, dbn_forward, dbn_forward_permuted, shuffled_dbn_forward, zca_backward,
    zca_forward, Dbn, DbnCache, DbnConfig, Permutation, WhiteningScale, ZcaCache, ZcaOptions,
    DEFAULT_EIG_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Batch statistics; running estimates are updated.
    Train,
    /// Running estimates; no state changes.
    Eval,
}

/// A trainable tensor with its gradient accumulator and SGD velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Matrix,
    #[serde(skip)]
    pub grad: Option<Matrix>,
    pub velocity: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: None,
            velocity: Matrix::zeros(r, c),
        }
    }

    /// Adds `g` into the gradient accumulator.
    pub fn accumulate(&mut self, g: &Matrix) -> crate::Result<()> {
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                if g.shape() != self.value.shape() {
                    return Err(crate::Error::dim("Param::accumulate", "gradient shape differs from parameter"));
                }
                self.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}
