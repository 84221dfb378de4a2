use alloc::format;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

/// Optimizer and schedule settings for pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.02,
            batch_size: 256,
            epochs: 200,
            warmup_epochs: 5,
            momentum: 0.9,
            weight_decay: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Linear scaling rule: `base_lr * batch_size / 256`.
    pub fn effective_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.base_lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("base_lr and weight_decay must be >= 0 and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Learning rate at optimizer step `step`.
///
/// Ramps linearly from 0 to the effective rate over the warmup steps, then
/// follows `lr * (1 + cos(pi * t)) / 2` with `t` running from 0 at the end of
/// warmup to 1 at the end of training.
pub fn lr_at(step: usize, cfg: &TrainConfig, steps_per_epoch: usize) -> f64 {
    let peak = cfg.effective_lr();
    let warmup = cfg.warmup_epochs * steps_per_epoch;
    let total = cfg.epochs * steps_per_epoch;
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return peak;
    }
    let t = ((step - warmup) as f64 / (total - warmup) as f64).min(1.0);
    peak * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}

/// One SGD update with heavy-ball momentum and coupled L2 weight decay:
/// `v = momentum * v + (grad + weight_decay * p)`, `p -= lr * v`.
/// Gradients are cleared afterwards; a missing gradient counts as zero.
pub fn sgd_step(net: &mut Network, lr: f64, momentum: f64, weight_decay: f64) {
    for p in net.params_mut() {
        let grad = p.grad.take();
        let value = p.value.as_mut_slice();
        let vel = p.velocity.as_mut_slice();
        for i in 0..value.len() {
            let g = grad.as_ref().map_or(0.0, |g| g.as_slice()[i]);
            vel[i] = momentum * vel[i] + g + weight_decay * value[i];
            value[i] -= lr * vel[i];
        }
    }
}
