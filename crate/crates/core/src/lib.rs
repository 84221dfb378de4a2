//! Feature-decorrelation normalization for siamese self-supervised learning.
//!
//! Everything here is pure computation over dense `f64` matrices and runs
//! without `std`: the linear algebra kernel, differentiable layers (linear,
//! ReLU, batch normalization, ZCA whitening, grouped and shuffled DBN), an MLP
//! encoder with SGD, the two-view training objective, synthetic data and
//! augmentation, and the collapse diagnostics.
//!
//! Feature batches follow a `D x B` layout: each row is one feature dimension
//! and each column one sample.

#![no_std]
// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod ssl;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use linalg::Matrix;
