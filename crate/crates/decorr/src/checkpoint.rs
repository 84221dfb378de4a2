//! Versioned JSON checkpoints. Floats are written with shortest round-trip
//! formatting and parsed with correct rounding, so every `f64` survives a
//! save/load cycle bit for bit.

use std::path::Path;

use decorr_core::model::Network;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::fsio::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "decorr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Completed training epochs.
    pub epoch: usize,
    pub config: ExperimentConfig,
    /// Parameters, optimizer velocities, running statistics and the
    /// permutation stream state.
    pub network: Network,
}

impl Checkpoint {
    pub fn new(epoch: usize, config: ExperimentConfig, network: Network) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch,
            config,
            network,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_vec(self).map_err(|e| RunError::Checkpoint(e.to_string()))?;
        write_atomic(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| RunError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(RunError::Checkpoint(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }
}
