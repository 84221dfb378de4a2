use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_KNN_K: usize = 5;

fn check_split(op: &str, feats: &Matrix, labels: &[usize]) -> Result<()> {
    if feats.cols() == 0 {
        return Err(Error::Eval(format!("{op}: empty sample set")));
    }
    if feats.cols() != labels.len() {
        return Err(Error::Eval(format!(
            "{op}: {} samples but {} labels",
            feats.cols(),
            labels.len()
        )));
    }
    Ok(())
}

fn accuracy(predicted: impl Iterator<Item = usize>, labels: &[usize]) -> f64 {
    let hits = predicted.zip(labels).filter(|(p, l)| p == *l).count();
    hits as f64 / labels.len() as f64
}

/// k-nearest-neighbour classification accuracy under Euclidean distance.
///
/// Neighbours are ranked by distance, then label, so the result does not
/// depend on training-set order. A vote tie goes to the tied class whose
/// closest neighbour is nearest, then to the lowest class id.
pub fn knn_eval(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    check_split("knn_eval train", train, train_labels)?;
    check_split("knn_eval test", test, test_labels)?;
    if train.rows() != test.rows() {
        return Err(Error::Eval(format!(
            "knn_eval: train width {} vs test width {}",
            train.rows(),
            test.rows()
        )));
    }
    if k == 0 || k > train.cols() {
        return Err(Error::Eval(format!("knn_eval: k = {k} with {} training samples", train.cols())));
    }
    let classes = train_labels.iter().copied().max().unwrap_or(0) + 1;
    let train_cols: Vec<Vec<f64>> = (0..train.cols()).map(|j| train.col(j)).collect();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.cols());
    let mut votes = vec![0usize; classes];
    let mut nearest = vec![f64::INFINITY; classes];

    let predicted = (0..test.cols()).map(|q| {
        let query = test.col(q);
        dist.clear();
        for (col, &label) in train_cols.iter().zip(train_labels) {
            let d: f64 = col.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
            dist.push((d, label));
        }
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_rank);
        }
        votes.iter_mut().for_each(|v| *v = 0);
        nearest.iter_mut().for_each(|v| *v = f64::INFINITY);
        for &(d, label) in &dist[..k] {
            votes[label] += 1;
            nearest[label] = nearest[label].min(d);
        }
        (0..classes)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(nearest[b].total_cmp(&nearest[a]))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    });
    Ok(accuracy(predicted, test_labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 100,
            lr: 0.1,
            batch_size: 256,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Top-1 accuracy of a softmax regression trained by minibatch SGD on frozen
/// features. Features are standardized per dimension with training-set
/// statistics first; constant dimensions are only centered.
pub fn linear_probe(
    train: &Matrix,
    train_labels: &[usize],
    eval: &Matrix,
    eval_labels: &[usize],
    cfg: &ProbeConfig,
) -> Result<f64> {
    check_split("linear_probe train", train, train_labels)?;
    check_split("linear_probe eval", eval, eval_labels)?;
    if train.rows() != eval.rows() {
        return Err(Error::Eval("linear_probe: feature widths differ".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("probe batch size and lr must be positive".into()));
    }
    let d = train.rows();
    let classes = train_labels.iter().chain(eval_labels).copied().max().unwrap_or(0) + 1;

    let (centered, means) = train.center_rows();
    let n = train.cols() as f64;
    let inv_std: Vec<f64> = (0..d)
        .map(|i| {
            let v = centered.row(i).iter().map(|x| x * x).sum::<f64>() / n;
            if v > 0.0 {
                1.0 / libm::sqrt(v)
            } else {
                1.0
            }
        })
        .collect();
    let standardize = |m: &Matrix| Matrix::from_fn(d, m.cols(), |i, j| (m[(i, j)] - means[i]) * inv_std[i]);
    let x = standardize(train);
    let xe = standardize(eval);

    // weights carry the bias as an extra trailing column
    let mut w = Matrix::zeros(classes, d + 1);
    let mut vel = Matrix::zeros(classes, d + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.cols()).collect();
    let mut logits = vec![0.0; classes];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = Matrix::zeros(classes, d + 1);
            for &s in chunk {
                softmax_into(&w, &x, s, &mut logits);
                logits[train_labels[s]] -= 1.0;
                for (c, &g) in logits.iter().enumerate() {
                    let row = grad.row_mut(c);
                    for i in 0..d {
                        row[i] += g * x[(i, s)];
                    }
                    row[d] += g;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for ((v, g), p) in vel
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice())
                .zip(w.as_mut_slice())
            {
                *v = cfg.momentum * *v + g * scale + cfg.weight_decay * *p;
                *p -= cfg.lr * *v;
            }
        }
    }
    let predicted = (0..xe.cols()).map(|s| {
        softmax_into(&w, &xe, s, &mut logits);
        (0..classes)
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    });
    Ok(accuracy(predicted, eval_labels))
}

fn softmax_into(w: &Matrix, x: &Matrix, sample: usize, out: &mut [f64]) {
    let d = x.rows();
    for (c, o) in out.iter_mut().enumerate() {
        let row = w.row(c);
        let mut z = row[d];
        for i in 0..d {
            z += row[i] * x[(i, sample)];
        }
        *o = z;
    }
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = libm::exp(*o - top);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
