//! One experiment per value of a single configuration axis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::fsio::write_atomic;
use crate::runner::{run_experiment, RunOutcome, RunStatus};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str =
    "value,status,epochs_completed,loss,mean_std,avg_corr,effective_rank,excluded_dims,knn_acc";

/// Sweepable axes and the configuration keys they set.
pub const AXES: &[(&str, &str)] = &[
    ("group_size", "norm.group_size"),
    ("output_dim", "encoder.output_dim"),
    ("batch_size", "train.batch_size"),
    ("objective", "objective"),
    ("epsilon", "norm.epsilon"),
    ("affine", "norm.affine"),
];

pub fn axis_key(axis: &str) -> Result<&'static str> {
    AXES.iter().find(|(a, _)| *a == axis).map(|(_, k)| *k).ok_or_else(|| {
        let names: Vec<&str> = AXES.iter().map(|(a, _)| *a).collect();
        RunError::Config(format!("unknown sweep axis `{axis}`; expected one of {}", names.join(", ")))
    })
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: String,
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub outcome: RunOutcome,
}

/// The per-value configurations, all validated before anything runs.
pub fn sweep_configs(base: &ExperimentConfig, axis: &str, values: &[String]) -> Result<Vec<ExperimentConfig>> {
    let key = axis_key(axis)?;
    if values.is_empty() {
        return Err(RunError::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|v| {
            let cfg = base.with_override(&format!("{key}={v}"))?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

/// Runs go to `out_dir/<axis>=<value>`, in parallel threads; the summary
/// lists them in the order given.
pub fn run_sweep(base: &ExperimentConfig, axis: &str, values: &[String], out_dir: &Path) -> Result<Vec<SweepEntry>> {
    let configs = sweep_configs(base, axis, values)?;
    let dirs: Vec<PathBuf> = values.iter().map(|v| out_dir.join(format!("{axis}={v}"))).collect();
    let results: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .zip(&dirs)
            .map(|(cfg, dir)| s.spawn(move || run_experiment(cfg, dir)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut entries = Vec::with_capacity(values.len());
    for (((value, dir), config), outcome) in values.iter().zip(dirs).zip(configs).zip(results) {
        entries.push(SweepEntry {
            value: value.clone(),
            dir,
            config,
            outcome: outcome?,
        });
    }
    write_atomic(&out_dir.join(SUMMARY_FILE), summary_csv(&entries).as_bytes())?;
    Ok(entries)
}

pub fn summary_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for e in entries {
        let status = match e.outcome.status {
            RunStatus::Completed => "completed",
            RunStatus::Collapsed => "collapsed",
        };
        let metrics = match &e.outcome.final_report {
            // the report row starts with its epoch; the summary has its own
            Some(r) => r.csv_row().split_once(',').map(|(_, rest)| rest.to_string()).unwrap_or_default(),
            None => "nan,nan,nan,nan,nan,nan".into(),
        };
        let value = if e.value.contains(',') {
            format!("\"{}\"", e.value)
        } else {
            e.value.clone()
        };
        let _ = writeln!(out, "{value},{status},{},{metrics}", e.outcome.epochs_completed);
    }
    out
}
