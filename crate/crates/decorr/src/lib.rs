//! Experiment runner on top of `decorr_core`: TOML configs with overrides,
//! CIFAR-10 files, JSON checkpoints, result bundles and parameter sweeps.

pub mod checkpoint;
pub mod cifar;
pub mod config;
pub mod error;
pub mod fsio;
pub mod runner;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{Result, RunError};
pub use runner::{run_experiment, train, RunOutcome, RunStatus};
