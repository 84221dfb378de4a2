use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ReluCache {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

pub fn relu_forward(x: &Matrix) -> (Matrix, ReluCache) {
    let mask: Vec<bool> = x.as_slice().iter().map(|&v| v > 0.0).collect();
    let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
    let (rows, cols) = x.shape();
    (y, ReluCache { rows, cols, mask })
}

/// Passes the gradient where the input was strictly positive.
pub fn relu_backward(cache: &ReluCache, dy: &Matrix) -> Result<Matrix> {
    if dy.shape() != (cache.rows, cache.cols) {
        return Err(Error::dim("relu_backward", "upstream gradient shape"));
    }
    let mut dx = dy.clone();
    for (g, &keep) in dx.as_mut_slice().iter_mut().zip(&cache.mask) {
        if !keep {
            *g = 0.0;
        }
    }
    Ok(dx)
}
