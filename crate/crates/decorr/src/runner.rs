//! Training runs: data preparation, the epoch loop, periodic diagnostics and
//! the on-disk result bundle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use decorr_core::data::{augment_pairs, epoch_batches, make_synthetic_clusters, Dataset};
use decorr_core::diagnostics::{knn_eval, CollapseReport, REPORT_CSV_HEADER};
use decorr_core::layers::Mode;
use decorr_core::linalg::Matrix;
use decorr_core::model::{lr_at, Network};
use decorr_core::ssl::{train_step, PositivePairBatch, Sgd, StepOutcome};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::cifar::load_cifar10_binary;
use crate::config::{DatasetSpec, ExperimentConfig, FeatureTap};
use crate::error::{Result, RunError};
use crate::fsio::write_atomic;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const REPORT_FILE: &str = "final_report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

const SAMPLING_STREAM: u64 = 1;
const DIAGNOSTIC_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Collapsed,
}

/// Where and why training stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub epoch: usize,
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub epochs_completed: usize,
    /// One row per diagnostic epoch.
    pub reports: Vec<CollapseReport>,
    /// Metrics of the final network; `None` if they could not be measured.
    pub final_report: Option<CollapseReport>,
    pub collapse: Option<CollapseEvent>,
    pub network: Network,
    /// Held-out projections `(x, y, label)` for 2-D projection spaces.
    pub scatter: Option<Vec<(f64, f64, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_splits(spec: &DatasetSpec) -> Result<Splits> {
    match spec {
        DatasetSpec::Synthetic {
            classes,
            per_class,
            test_per_class,
            dim,
            separation,
            seed,
        } => {
            let all = make_synthetic_clusters(*classes, *per_class, *dim, *separation, *seed)?;
            let (train, test) = all.split_per_class(*test_per_class)?;
            Ok(Splits { train, test })
        }
        DatasetSpec::Cifar10 {
            train_paths,
            test_paths,
        } => Ok(Splits {
            train: load_cifar10_binary(train_paths)?,
            test: load_cifar10_binary(test_paths)?,
        }),
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The fixed, un-augmented diagnostic batch plus one augmented pair of it
/// for the loss column.
struct DiagnosticSet {
    batch: Matrix,
    pair: PositivePairBatch,
}

impl DiagnosticSet {
    fn new(cfg: &ExperimentConfig, train: &Dataset) -> Result<Self> {
        let mut rng = stream(cfg.train.seed, DIAGNOSTIC_STREAM);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(cfg.diagnostics.batch.min(train.len()));
        let pair = augment_pairs(train, &order, &cfg.augment, &mut rng)?;
        Ok(DiagnosticSet {
            batch: train.batch(&order),
            pair,
        })
    }
}

fn tap_depth(cfg: &ExperimentConfig, net: &Network) -> usize {
    match cfg.diagnostics.knn_features {
        FeatureTap::Hidden => cfg.encoder_spec().hidden_block_end(cfg.encoder.hidden.len()),
        FeatureTap::Output => net.layers().len(),
    }
}

/// Eval-mode features of a whole dataset at the given depth.
pub fn encode(net: &mut Network, data: &Dataset, depth: usize) -> Result<Matrix> {
    let previous = net.mode();
    net.set_mode(Mode::Eval);
    let out = net.forward_prefix(&data.features(), depth).map(|(y, _)| y);
    net.set_mode(previous);
    Ok(out?)
}

/// Collapse indicators and loss on the diagnostic batch, normalized with
/// that batch's own statistics, and kNN accuracy of eval-mode features on
/// the held-out split. The network itself is left untouched.
fn measure(
    cfg: &ExperimentConfig,
    net: &Network,
    splits: &Splits,
    diag: &DiagnosticSet,
    epoch: usize,
) -> Result<CollapseReport> {
    let d = &cfg.diagnostics;
    let mut probe = net.clone();
    probe.set_mode(Mode::Train);
    let z = probe.forward(&diag.batch)?.0;
    let z1 = probe.forward(&diag.pair.view1)?.0;
    let z2 = probe.forward(&diag.pair.view2)?.0;
    let loss = cfg.objective.evaluate(&z1, &z2).map(|l| l.value).unwrap_or(f64::NAN);
    let mut report = CollapseReport::measure(epoch, loss, &z, d.var_floor, d.rank_tol)?;

    let mut frozen = net.clone();
    let depth = tap_depth(cfg, &frozen);
    let train_feats = encode(&mut frozen, &splits.train, depth)?;
    let test_feats = encode(&mut frozen, &splits.test, depth)?;
    let k = d.knn_k.min(splits.train.len());
    report.knn_acc = Some(knn_eval(
        &train_feats,
        splits.train.labels(),
        &test_feats,
        splits.test.labels(),
        k,
    )?);
    Ok(report)
}

fn collapse_of(e: &RunError) -> Option<String> {
    match e {
        RunError::Compute(c) if c.is_collapse() => Some(c.to_string()),
        _ => None,
    }
}

fn is_report_epoch(epoch: usize, cadence: usize) -> bool {
    epoch == 0 || (cadence > 0 && epoch.is_multiple_of(cadence))
}

/// Train in memory. `on_report` sees every diagnostic row as it is produced.
pub fn train_with(
    cfg: &ExperimentConfig,
    splits: &Splits,
    mut on_report: impl FnMut(&[CollapseReport]) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if splits.train.input_dim() != cfg.input_dim() {
        return Err(RunError::Config(format!(
            "dataset has {} inputs, encoder expects {}",
            splits.train.input_dim(),
            cfg.input_dim()
        )));
    }
    let mut net = Network::build(&cfg.encoder_spec(), cfg.train.seed)?;
    let diag = DiagnosticSet::new(cfg, &splits.train)?;
    let mut sampler = stream(cfg.train.seed, SAMPLING_STREAM);
    let opt = Sgd {
        momentum: cfg.train.momentum,
        weight_decay: cfg.train.weight_decay,
    };
    let steps_per_epoch = splits.train.len() / cfg.train.batch_size;

    let mut reports = vec![measure(cfg, &net, splits, &diag, 0)?];
    on_report(&reports)?;
    let mut step = 0;
    let mut collapse = None;
    let mut epochs_completed = 0;
    'epochs: for epoch in 1..=cfg.train.epochs {
        for indices in epoch_batches(splits.train.len(), cfg.train.batch_size, &mut sampler)? {
            let batch = augment_pairs(&splits.train, &indices, &cfg.augment, &mut sampler)?;
            let lr = lr_at(step, &cfg.train, steps_per_epoch);
            match train_step(&mut net, &batch, cfg.objective, &opt, lr)? {
                StepOutcome::Completed { .. } => {}
                StepOutcome::Collapsed(e) => {
                    collapse = Some(CollapseEvent {
                        epoch,
                        step,
                        message: e.to_string(),
                    });
                    break 'epochs;
                }
            }
            step += 1;
        }
        epochs_completed = epoch;
        if is_report_epoch(epoch, cfg.diagnostics.cadence) {
            match measure(cfg, &net, splits, &diag, epoch) {
                Ok(r) => reports.push(r),
                Err(e) => match collapse_of(&e) {
                    Some(message) => {
                        collapse = Some(CollapseEvent { epoch, step, message });
                        break 'epochs;
                    }
                    None => return Err(e),
                },
            }
            on_report(&reports)?;
        }
    }

    let final_report = match reports.last() {
        Some(r) if r.epoch == epochs_completed && collapse.is_none() => Some(r.clone()),
        _ => measure(cfg, &net, splits, &diag, epochs_completed).ok(),
    };
    let scatter = if cfg.encoder.output_dim == 2 {
        let depth = net.layers().len();
        encode(&mut net, &splits.test, depth).ok().map(|z| {
            (0..z.cols())
                .map(|j| (z[(0, j)], z[(1, j)], splits.test.labels()[j]))
                .collect()
        })
    } else {
        None
    };
    Ok(RunOutcome {
        status: if collapse.is_some() {
            RunStatus::Collapsed
        } else {
            RunStatus::Completed
        },
        epochs_completed,
        reports,
        final_report,
        collapse,
        network: net,
        scatter,
    })
}

pub fn train(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let splits = load_splits(&cfg.dataset)?;
    train_with(cfg, &splits, |_| Ok(()))
}

pub fn metrics_csv(reports: &[CollapseReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn scatter_csv(points: &[(f64, f64, usize)]) -> String {
    let mut out = String::from("x,y,label\n");
    for (x, y, l) in points {
        let _ = writeln!(out, "{x},{y},{l}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub status: RunStatus,
    pub seed: u64,
    pub epochs_completed: usize,
    #[serde(rename = "final")]
    pub final_metrics: Option<CollapseReport>,
    pub collapse: Option<CollapseEvent>,
    /// The resolved configuration as TOML text; loading it reproduces the run.
    pub config_toml: String,
    pub config: ExperimentConfig,
}

/// Validate, train and write the result bundle into `out_dir`: metrics.csv
/// (rewritten after every diagnostic row), scatter.csv for 2-D projections,
/// final_report.json and a checkpoint. Nothing is written when validation
/// fails.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let splits = load_splits(&cfg.dataset)?;
    std::fs::create_dir_all(out_dir).map_err(|e| RunError::io(out_dir, e))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let outcome = train_with(cfg, &splits, |reports| {
        write_atomic(&metrics_path, metrics_csv(reports).as_bytes())
    })?;

    if let Some(points) = &outcome.scatter {
        write_atomic(&out_dir.join(SCATTER_FILE), scatter_csv(points).as_bytes())?;
    }
    Checkpoint::new(outcome.epochs_completed, cfg.clone(), outcome.network.clone())
        .save(&out_dir.join(CHECKPOINT_FILE))?;
    let report = FinalReport {
        status: outcome.status,
        seed: cfg.train.seed,
        epochs_completed: outcome.epochs_completed,
        final_metrics: outcome.final_report.clone(),
        collapse: outcome.collapse.clone(),
        config_toml: cfg.to_toml_string(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| RunError::Checkpoint(e.to_string()))?;
    write_atomic(&out_dir.join(REPORT_FILE), json.as_bytes())?;
    Ok(outcome)
}

/// `out` for a run directory given on the command line, else the config's.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone())
}

/// Check that a network fits the configured data before evaluating it.
fn check_input(net: &Network, splits: &Splits) -> Result<()> {
    match net.input_dim() {
        Some(d) if d == splits.train.input_dim() && d == splits.test.input_dim() => Ok(()),
        other => Err(RunError::Checkpoint(format!(
            "network expects {} inputs, dataset provides {}",
            other.map_or_else(|| "unknown".to_string(), |d| d.to_string()),
            splits.train.input_dim()
        ))),
    }
}

/// The diagnostic row a training run with `cfg` would record for `net`.
pub fn diagnose(cfg: &ExperimentConfig, net: &Network, splits: &Splits, epoch: usize) -> Result<CollapseReport> {
    check_input(net, splits)?;
    let diag = DiagnosticSet::new(cfg, &splits.train)?;
    measure(cfg, net, splits, &diag, epoch)
}

/// Eval-mode features of both splits at the configured kNN tap.
pub fn frozen_features(cfg: &ExperimentConfig, net: &Network, splits: &Splits) -> Result<(Matrix, Matrix)> {
    check_input(net, splits)?;
    let mut net = net.clone();
    let depth = tap_depth(cfg, &net);
    Ok((encode(&mut net, &splits.train, depth)?, encode(&mut net, &splits.test, depth)?))
}
