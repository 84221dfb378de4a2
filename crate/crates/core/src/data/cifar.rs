//! The CIFAR-10 binary record format: one label byte followed by 1024 red,
//! 1024 green and 1024 blue pixel bytes, each plane row-major.

use alloc::format;
use alloc::vec::Vec;

use super::image::PLANE;
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD_BYTES: usize = 1 + CIFAR_PIXELS;
pub const CIFAR_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecord {
    pub label: u8,
    pub pixels: Vec<u8>,
}

impl CifarRecord {
    /// Pixels scaled to `[0, 1]`.
    pub fn unit_pixels(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels.iter().map(|&p| p as f64 / 255.0)
    }
}

/// Split a file's bytes into records. Offsets in errors are byte positions
/// within `bytes`.
pub fn parse_cifar10_records(bytes: &[u8]) -> Result<Vec<CifarRecord>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        let whole = bytes.len() / CIFAR_RECORD_BYTES;
        return Err(Error::Format {
            offset: whole * CIFAR_RECORD_BYTES,
            detail: format!(
                "length {} is not a multiple of {CIFAR_RECORD_BYTES}; trailing partial record",
                bytes.len()
            ),
        });
    }
    bytes
        .chunks_exact(CIFAR_RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label as usize >= CIFAR_CLASSES {
                return Err(Error::Format {
                    offset: i * CIFAR_RECORD_BYTES,
                    detail: format!("label {label} is not below {CIFAR_CLASSES}"),
                });
            }
            Ok(CifarRecord {
                label,
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

pub fn encode_cifar10_records(records: &[CifarRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(records.len() * CIFAR_RECORD_BYTES);
    for r in records {
        if r.pixels.len() != CIFAR_PIXELS {
            return Err(Error::dim(
                "encode_cifar10_records",
                format!("{} pixel bytes, expected {CIFAR_PIXELS}", r.pixels.len()),
            ));
        }
        out.push(r.label);
        out.extend_from_slice(&r.pixels);
    }
    Ok(out)
}

/// Scale pixels to `[0, 1]`, then standardize each colour channel with its
/// mean and population standard deviation over the whole set. A constant
/// channel is only centered.
pub fn normalize_channels(records: &[CifarRecord]) -> Result<Dataset> {
    let n = records.len();
    let mut samples = Matrix::zeros(n, CIFAR_PIXELS);
    for (i, r) in records.iter().enumerate() {
        if r.pixels.len() != CIFAR_PIXELS {
            return Err(Error::dim(
                "normalize_channels",
                format!("record {i} has {} pixel bytes", r.pixels.len()),
            ));
        }
        for (dst, v) in samples.row_mut(i).iter_mut().zip(r.unit_pixels()) {
            *dst = v;
        }
    }
    let count = (n * PLANE) as f64;
    for c in 0..3 {
        let span = c * PLANE..(c + 1) * PLANE;
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            for &v in &samples.row(i)[span.clone()] {
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / count;
        let var = (sq / count - mean * mean).max(0.0);
        let std = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        for i in 0..n {
            for v in &mut samples.row_mut(i)[span.clone()] {
                *v = (*v - mean) / std;
            }
        }
    }
    let labels = records.iter().map(|r| r.label as usize).collect();
    Dataset::new(samples, labels, CIFAR_CLASSES)
}
