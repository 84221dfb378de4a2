use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCache {
    input: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub dx: Matrix,
    pub dweight: Matrix,
    pub dbias: Matrix,
}

/// `y = W x + b`, with `b` broadcast over columns.
pub fn linear_forward(x: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<(Matrix, LinearCache)> {
    if bias.shape() != (weight.rows(), 1) {
        return Err(Error::dim(
            "linear_forward",
            format!("bias is {}x{}, expected {}x1", bias.rows(), bias.cols(), weight.rows()),
        ));
    }
    let mut y = weight.matmul(x)?;
    for i in 0..y.rows() {
        let b = bias[(i, 0)];
        for v in y.row_mut(i) {
            *v += b;
        }
    }
    Ok((y, LinearCache { input: x.clone() }))
}

pub fn linear_backward(cache: &LinearCache, weight: &Matrix, dy: &Matrix) -> Result<LinearGrads> {
    if dy.shape() != (weight.rows(), cache.input.cols()) {
        return Err(Error::dim("linear_backward", "upstream gradient shape"));
    }
    let dweight = dy.matmul_t(&cache.input)?;
    let dbias = Matrix::column(&dy.row_means()).scale(dy.cols() as f64);
    let dx = weight.t_matmul(dy)?;
    Ok(LinearGrads { dx, dweight, dbias })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(input_dim.max(1) as f64);
        let weight = Matrix::from_fn(output_dim, input_dim, |_, _| rng.gen_range(-bound..=bound));
        Linear {
            weight: Param::new(weight),
            bias: Param::new(Matrix::zeros(output_dim, 1)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LinearCache)> {
        linear_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&self, cache: &LinearCache, dy: &Matrix) -> Result<LinearGrads> {
        linear_backward(cache, &self.weight.value, dy)
    }
}
