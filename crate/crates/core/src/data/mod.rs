//! Datasets, the augmentation distribution and positive-pair sampling.

mod augment;
mod cifar;
mod image;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::ssl::PositivePairBatch;

pub use augment::{AugmentationPolicy, ImageAugment, VectorAugment};
pub use cifar::{
    encode_cifar10_records, normalize_channels, parse_cifar10_records, CifarRecord, CIFAR_CLASSES,
    CIFAR_PIXELS, CIFAR_RECORD_BYTES,
};
pub use image::{IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE};

/// Labelled samples stored one per row (`N x input_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Matrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(samples: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::Config("dataset has no samples".into()));
        }
        if labels.len() != samples.rows() {
            return Err(Error::dim(
                "Dataset::new",
                format!("{} labels for {} samples", labels.len(), samples.rows()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        if !samples.is_finite() {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// The selected samples as a `input_dim x indices.len()` batch.
    pub fn batch(&self, indices: &[usize]) -> Matrix {
        let d = self.input_dim();
        let mut out = Matrix::zeros(d, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            for (k, &v) in self.sample(i).iter().enumerate() {
                out[(k, j)] = v;
            }
        }
        out
    }

    /// Every sample, in order, as one `input_dim x N` batch.
    pub fn features(&self) -> Matrix {
        self.samples.transpose()
    }

    /// Hold out the last `test_per_class` samples of every class.
    pub fn split_per_class(&self, test_per_class: usize) -> Result<(Dataset, Dataset)> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        if let Some(c) = (0..self.class_count).find(|&c| counts[c] != 0 && counts[c] <= test_per_class) {
            return Err(Error::Config(format!(
                "class {c} has {} samples, cannot hold out {test_per_class}",
                counts[c]
            )));
        }
        let mut seen = vec![0usize; self.class_count];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            seen[l] += 1;
            if seen[l] > counts[l] - test_per_class {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        if test.is_empty() {
            return Err(Error::Config("empty held-out split".into()));
        }
        Ok((self.subset(&train), self.subset(&test)))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Isotropic unit-variance Gaussian blobs, `per_class` samples each, grouped
/// by class.
///
/// Class means start as standard normal draws and are rescaled so that the
/// closest pair sits exactly `separation` apart. A single class is centered
/// at the origin.
pub fn make_synthetic_clusters(
    class_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    use rand::SeedableRng;
    if class_count == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Config("cluster counts must be positive".into()));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::Config(format!("invalid separation {separation}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut means = Matrix::from_fn(class_count, dim, |_, _| rng.sample(StandardNormal));
    if class_count == 1 {
        means = Matrix::zeros(1, dim);
    } else {
        let mut closest = f64::INFINITY;
        for a in 0..class_count {
            for b in (a + 1)..class_count {
                let d2: f64 = means
                    .row(a)
                    .iter()
                    .zip(means.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                closest = closest.min(libm::sqrt(d2));
            }
        }
        means = means.scale(separation / closest);
    }

    let n = class_count * per_class;
    let mut samples = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..class_count {
        for s in 0..per_class {
            let row = samples.row_mut(c * per_class + s);
            for (k, v) in row.iter_mut().enumerate() {
                *v = means[(c, k)] + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c);
        }
    }
    Dataset::new(samples, labels, class_count)
}

/// Augment each selected sample twice, independently.
pub fn augment_pairs<R: Rng + ?Sized>(
    dataset: &Dataset,
    indices: &[usize],
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Result<PositivePairBatch> {
    policy.validate(dataset.input_dim())?;
    let d = dataset.input_dim();
    let b = indices.len();
    let mut view1 = Matrix::zeros(d, b);
    let mut view2 = Matrix::zeros(d, b);
    let mut buf = Vec::with_capacity(d);
    for (j, &i) in indices.iter().enumerate() {
        let src = dataset.sample(i);
        for view in [&mut view1, &mut view2] {
            buf.clear();
            buf.extend_from_slice(src);
            policy.apply(&mut buf, rng);
            for (k, &v) in buf.iter().enumerate() {
                view[(k, j)] = v;
            }
        }
    }
    Ok(PositivePairBatch {
        view1,
        view2,
        indices: indices.to_vec(),
    })
}

/// `batch_size` distinct samples drawn uniformly, each augmented twice.
pub fn sample_positive_pairs<R: Rng + ?Sized>(
    dataset: &Dataset,
    policy: &AugmentationPolicy,
    batch_size: usize,
    rng: &mut R,
) -> Result<PositivePairBatch> {
    if batch_size > dataset.len() {
        return Err(Error::Sampling {
            requested: batch_size,
            available: dataset.len(),
        });
    }
    let indices = index::sample(rng, dataset.len(), batch_size).into_vec();
    augment_pairs(dataset, &indices, policy, rng)
}

/// Batches of one shuffled pass over `n` samples. The trailing partial batch
/// is dropped so every step sees exactly `batch_size` samples.
pub fn epoch_batches<R: Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::Sampling {
            requested: batch_size,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order
        .chunks_exact(batch_size)
        .map(|c| c.to_vec())
        .collect())
}
