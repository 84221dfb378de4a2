//! MLP encoder, SGD with momentum and weight decay, and the warmup + cosine
//! learning-rate schedule.

mod network;
mod optim;

pub use network::{EncoderSpec, Layer, LayerCache, Network, NormVariant};
pub use optim::{lr_at, sgd_step, TrainConfig};
