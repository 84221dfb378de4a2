use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    relu_backward, relu_forward, BatchNorm, BnCache, BnConfig, Dbn, DbnCache, DbnConfig, Linear,
    LinearCache, Mode, Param, ReluCache,
};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Linear(Linear),
    Relu,
    BatchNorm(BatchNorm),
    /// Plain or shuffled DBN, depending on `config.shuffle`.
    Dbn(Dbn),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerCache {
    Linear(LinearCache),
    Relu(ReluCache),
    BatchNorm(BnCache),
    Dbn(DbnCache),
}

impl Layer {
    fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Relu => "relu",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Dbn(_) => "dbn",
        }
    }

    /// Output width given the input width; `None` if the input does not fit.
    fn output_dim(&self, input: usize) -> Option<usize> {
        match self {
            Layer::Linear(l) => (l.input_dim() == input).then(|| l.output_dim()),
            Layer::Relu => Some(input),
            Layer::BatchNorm(b) => (b.dim() == input).then_some(input),
            Layer::Dbn(d) => (d.dim() == input).then_some(input),
        }
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, LayerCache)> {
        Ok(match self {
            Layer::Linear(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Linear(c))
            }
            Layer::Relu => {
                let (y, c) = relu_forward(x);
                (y, LayerCache::Relu(c))
            }
            Layer::BatchNorm(b) => {
                let (y, c) = b.forward(x, mode)?;
                (y, LayerCache::BatchNorm(c))
            }
            Layer::Dbn(d) => {
                let (y, c) = d.forward(x, mode)?;
                (y, LayerCache::Dbn(c))
            }
        })
    }

    fn backward(&mut self, cache: &LayerCache, dy: &Matrix) -> Result<Matrix> {
        match (self, cache) {
            (Layer::Linear(l), LayerCache::Linear(c)) => {
                let g = l.backward(c, dy)?;
                l.weight.accumulate(&g.dweight)?;
                l.bias.accumulate(&g.dbias)?;
                Ok(g.dx)
            }
            (Layer::Relu, LayerCache::Relu(c)) => relu_backward(c, dy),
            (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => {
                let g = b.backward(c, dy)?;
                if let (Some(p), Some(dg)) = (b.gamma.as_mut(), g.dgamma.as_ref()) {
                    p.accumulate(dg)?;
                }
                if let (Some(p), Some(db)) = (b.beta.as_mut(), g.dbeta.as_ref()) {
                    p.accumulate(db)?;
                }
                Ok(g.dx)
            }
            (Layer::Dbn(_), LayerCache::Dbn(c)) => crate::layers::dbn_backward(c, dy),
            (layer, _) => Err(Error::Cache(format!("cache does not belong to a {} layer", layer.kind()))),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Linear(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(b) => b.gamma.iter_mut().chain(b.beta.iter_mut()).collect(),
            Layer::Relu | Layer::Dbn(_) => Vec::new(),
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Linear(l) => alloc::vec![&l.weight, &l.bias],
            Layer::BatchNorm(b) => b.gamma.iter().chain(b.beta.iter()).collect(),
            Layer::Relu | Layer::Dbn(_) => Vec::new(),
        }
    }
}

/// Normalization appended to the encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormVariant {
    None,
    BatchNorm(BnConfig),
    /// DBN; shuffled when `shuffle` is set.
    Dbn(DbnConfig),
}

/// `input -> [Linear -> BN -> ReLU] per hidden width -> Linear -> head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub hidden_norm: BnConfig,
    pub head: NormVariant,
}

impl EncoderSpec {
    /// Layer count up to and including the `k`-th hidden block.
    pub fn hidden_block_end(&self, k: usize) -> usize {
        3 * k.min(self.hidden.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    mode: Mode,
}

impl Network {
    /// Fails unless consecutive layer widths agree.
    pub fn new(layers: Vec<Layer>, input_dim: usize) -> Result<Self> {
        let mut d = input_dim;
        for (i, l) in layers.iter().enumerate() {
            d = l.output_dim(d).ok_or_else(|| {
                Error::dim("Network::new", format!("layer {i} ({}) does not accept width {d}", l.kind()))
            })?;
        }
        Ok(Network {
            layers,
            mode: Mode::Train,
        })
    }

    /// Seeded construction from a spec; linear weights are uniform in
    /// `+-1/sqrt(fan_in)` and biases zero.
    pub fn build(spec: &EncoderSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut d = spec.input_dim;
        for &h in &spec.hidden {
            layers.push(Layer::Linear(Linear::init(d, h, &mut rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(h, spec.hidden_norm)?));
            layers.push(Layer::Relu);
            d = h;
        }
        layers.push(Layer::Linear(Linear::init(d, spec.output_dim, &mut rng)));
        match spec.head {
            NormVariant::None => {}
            NormVariant::BatchNorm(cfg) => layers.push(Layer::BatchNorm(BatchNorm::new(spec.output_dim, cfg)?)),
            NormVariant::Dbn(cfg) => layers.push(Layer::Dbn(Dbn::new(spec.output_dim, cfg)?)),
        }
        Network::new(layers, spec.input_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Linear(l) => Some(l.input_dim()),
            Layer::BatchNorm(b) => Some(b.dim()),
            Layer::Dbn(d) => Some(d.dim()),
            Layer::Relu => None,
        })
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<(Matrix, Vec<LayerCache>)> {
        let n = self.layers.len();
        self.forward_prefix(x, n)
    }

    /// Runs only the first `depth` layers.
    pub fn forward_prefix(&mut self, x: &Matrix, depth: usize) -> Result<(Matrix, Vec<LayerCache>)> {
        let mode = self.mode;
        let mut caches = Vec::with_capacity(depth);
        let mut h = x.clone();
        for layer in self.layers.iter_mut().take(depth) {
            let (y, c) = layer.forward(&h, mode)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    /// Back-propagates `dy` through the layers that produced `caches`,
    /// adding parameter gradients to the accumulators. Calling this once per
    /// branch sums the gradients of a shared-weight siamese pair.
    pub fn backward(&mut self, caches: &[LayerCache], dy: &Matrix) -> Result<Matrix> {
        if caches.len() != self.layers.len() {
            return Err(Error::Cache(format!(
                "{} caches for {} layers",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut g = dy.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}
