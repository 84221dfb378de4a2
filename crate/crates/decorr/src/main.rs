use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decorr::checkpoint::Checkpoint;
use decorr::config::ExperimentConfig;
use decorr::runner::{diagnose, frozen_features, load_splits, output_dir, run_experiment, RunStatus};
use decorr::sweep::run_sweep;
use decorr::{Result, RunError};
use decorr_core::diagnostics::{knn_eval, linear_probe};

#[derive(Parser)]
#[command(name = "decorr", version, about = "Siamese training with decorrelated normalization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `output.dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training seed; shorthand for `--set train.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckpointArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its result bundle.
    Train(Common),
    /// Train once per value of one configuration axis.
    Sweep {
        /// One of group_size, output_dim, batch_size, objective, epsilon, affine.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the collapse report of a checkpoint as JSON.
    Diagnose(CheckpointArgs),
    /// Linear-probe accuracy of a checkpoint's frozen features.
    EvalLinear(CheckpointArgs),
    /// kNN accuracy of a checkpoint's frozen features.
    EvalKnn(CheckpointArgs),
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(seed) = self.seed {
            all.push(format!("train.seed={seed}"));
        }
        all
    }

    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.overrides()),
            None => ExperimentConfig::from_toml_str("", &self.overrides()),
        }
    }

    /// Configuration for evaluating a checkpoint: the explicit file if
    /// given, else the one stored in the checkpoint, plus overrides.
    fn for_checkpoint(&self, ck: &Checkpoint) -> Result<ExperimentConfig> {
        if self.config.is_some() {
            return self.load();
        }
        let mut cfg = ck.config.clone();
        for o in self.overrides() {
            cfg = cfg.with_override(&o)?;
        }
        Ok(cfg)
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Checkpoint(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Completed => 0,
        RunStatus::Collapsed => 3,
    }
}

fn open(args: &CheckpointArgs) -> Result<(Checkpoint, ExperimentConfig, decorr::runner::Splits)> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let cfg = args.common.for_checkpoint(&ck)?;
    let splits = load_splits(&cfg.dataset)?;
    Ok((ck, cfg, splits))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let dir = output_dir(&cfg, common.out.as_deref());
            let outcome = run_experiment(&cfg, &dir)?;
            eprintln!(
                "{:?} after {} epoch(s); results in {}",
                outcome.status,
                outcome.epochs_completed,
                dir.display()
            );
            Ok(status_code(outcome.status))
        }
        Command::Sweep { axis, values, common } => {
            let cfg = common.load()?;
            let dir = output_dir(&cfg, common.out.as_deref());
            let entries = run_sweep(&cfg, &axis, &values, &dir)?;
            eprintln!("{} run(s); summary in {}", entries.len(), Path::new(&dir).join("summary.csv").display());
            Ok(0)
        }
        Command::Diagnose(args) => {
            let (ck, cfg, splits) = open(&args)?;
            print_json(&diagnose(&cfg, &ck.network, &splits, ck.epoch)?)?;
            Ok(0)
        }
        Command::EvalLinear(args) => {
            let (ck, cfg, splits) = open(&args)?;
            let (train, test) = frozen_features(&cfg, &ck.network, &splits)?;
            let accuracy = linear_probe(
                &train,
                splits.train.labels(),
                &test,
                splits.test.labels(),
                &cfg.diagnostics.probe,
            )?;
            print_json(&serde_json::json!({ "linear_probe_acc": accuracy }))?;
            Ok(0)
        }
        Command::EvalKnn(args) => {
            let (ck, cfg, splits) = open(&args)?;
            let (train, test) = frozen_features(&cfg, &ck.network, &splits)?;
            let k = cfg.diagnostics.knn_k.min(splits.train.len());
            let accuracy = knn_eval(&train, splits.train.labels(), &test, splits.test.labels(), k)?;
            print_json(&serde_json::json!({ "knn_acc": accuracy, "k": k }))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
