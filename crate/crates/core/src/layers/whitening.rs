//! ZCA whitening, grouped decorrelated batch normalization (DBN), and the
//! shuffled variant that whitens a freshly permuted grouping on every
//! training call.
//!
//! For one group with centered input `Xc` (`G x B`) the forward map is
//!
//! ```text
//! S = Xc Xc^T          (times 1/B under WhiteningScale::Covariance)
//! S = Q diag(l) Q^T
//! W = Q diag((l + floor)^-1/2) Q^T
//! Y = W Xc
//! ```
//!
//! so that `Y Y^T = I` (or `Y Y^T / B = I`) up to the floor.
//!
//! The backward pass differentiates through the eigendecomposition with the
//! divided-difference form of the matrix-function derivative: for
//! `f(l) = (l + floor)^-1/2` and `a_i = sqrt(l_i + floor)`,
//! `(f(l_i) - f(l_j)) / (l_i - l_j) = -1 / (a_i a_j (a_i + a_j))`, which is
//! also `f'(l_i)` when `i == j`. No eigenvalue gap ever appears in a
//! denominator, so repeated eigenvalues need no special handling.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};

/// Added to every eigenvalue before the inverse square root, and used as the
/// smallest admissible smallest/largest eigenvalue ratio.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

/// Normalization of the group scatter matrix before whitening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhiteningScale {
    /// `S = Xc Xc^T`; outputs satisfy `Y Y^T = I`.
    #[default]
    Gram,
    /// `S = Xc Xc^T / B`; outputs have unit per-row variance, like BN.
    Covariance,
}

impl WhiteningScale {
    fn factor(self, batch: usize) -> f64 {
        match self {
            WhiteningScale::Gram => 1.0,
            WhiteningScale::Covariance => 1.0 / batch as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZcaOptions {
    pub eig_floor: f64,
    pub scale: WhiteningScale,
}

impl Default for ZcaOptions {
    fn default() -> Self {
        ZcaOptions {
            eig_floor: DEFAULT_EIG_FLOOR,
            scale: WhiteningScale::Gram,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcaCache {
    centered: Matrix,
    eigvecs: Matrix,
    /// `sqrt(l_i + floor)`
    roots: Vec<f64>,
    transform: Matrix,
    factor: f64,
}

impl ZcaCache {
    /// The whitening matrix `W` applied to the centered input.
    pub fn transform(&self) -> &Matrix {
        &self.transform
    }
}

/// Whitens all rows of `x` jointly.
///
/// Fails with [`Error::RankDeficient`] (group 0) when the smallest eigenvalue
/// of the scatter matrix is not above `eig_floor` times the largest; a
/// centered batch has rank at most `B - 1`, so this always triggers when
/// `B <= D`.
pub fn zca_forward(x: &Matrix, opts: &ZcaOptions) -> Result<(Matrix, ZcaCache)> {
    whiten_group(x, opts, 0)
}

fn whiten_group(x: &Matrix, opts: &ZcaOptions, group: usize) -> Result<(Matrix, ZcaCache)> {
    let (g, b) = x.shape();
    if g == 0 || b == 0 {
        return Err(Error::dim("zca_forward", "empty input"));
    }
    let (centered, _) = x.center_rows();
    let factor = opts.scale.factor(b);
    let scatter = centered.gram().scale(factor);
    let eig = sym_eig(&scatter)?;
    let largest = eig.values[0];
    let smallest = eig.values[g - 1];
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(ratio > opts.eig_floor) {
        return Err(Error::RankDeficient { group, ratio });
    }
    let roots: Vec<f64> = eig.values.iter().map(|&l| libm::sqrt(l + opts.eig_floor)).collect();
    let inv = EigenParts {
        vectors: &eig.vectors,
        diag: roots.iter().map(|a| 1.0 / a).collect(),
    };
    let transform = inv.assemble();
    let y = transform.matmul(&centered)?;
    Ok((
        y,
        ZcaCache {
            centered,
            eigvecs: eig.vectors,
            roots,
            transform,
            factor,
        },
    ))
}

struct EigenParts<'a> {
    vectors: &'a Matrix,
    diag: Vec<f64>,
}

impl EigenParts<'_> {
    /// `Q diag(d) Q^T`
    fn assemble(&self) -> Matrix {
        let q = self.vectors;
        let n = q.rows();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q[(i, k)] * self.diag[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Gradient of [`zca_forward`] with respect to its input.
pub fn zca_backward(cache: &ZcaCache, dy: &Matrix) -> Result<Matrix> {
    let xc = &cache.centered;
    if dy.shape() != xc.shape() {
        return Err(Error::dim("zca_backward", "upstream gradient shape"));
    }
    let n = xc.rows();
    let q = &cache.eigvecs;
    let a = &cache.roots;

    // direct path through Y = W Xc
    let mut dxc = cache.transform.matmul(dy)?;

    // path through W = f(S)
    let grad_w = dy.matmul_t(xc)?;
    let mut m = q.t_matmul(&grad_w)?.matmul(q)?;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= -1.0 / (a[i] * a[j] * (a[i] + a[j]));
        }
    }
    let grad_s = q.matmul(&m)?.matmul_t(q)?;
    let sym = grad_s.add(&grad_s.transpose())?.scale(cache.factor);
    dxc.add_assign(&sym.matmul(xc)?)?;

    // centering
    let means = dxc.row_means();
    for (i, mu) in means.iter().enumerate() {
        for v in dxc.row_mut(i) {
            *v -= mu;
        }
    }
    Ok(dxc)
}

/// A permutation of feature rows. `apply` moves row `forward[i]` to
/// position `i`; `invert` undoes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.forward
    }
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = alloc::vec![usize::MAX; n];
        for (i, &f) in forward.iter().enumerate() {
            if f >= n || inverse[f] != usize::MAX {
                return Err(Error::Config(format!("{forward:?} is not a permutation")));
            }
            inverse[f] = i;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        Permutation {
            inverse: forward.clone(),
            forward,
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut forward: Vec<usize> = (0..n).collect();
        forward.shuffle(rng);
        Permutation::new(forward).expect("shuffle yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward_map(&self) -> &[usize] {
        &self.forward
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &f)| i == f)
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        x.select_rows(&self.forward)
    }

    pub fn invert(&self, y: &Matrix) -> Matrix {
        y.select_rows(&self.inverse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbnConfig {
    pub group_size: usize,
    pub eig_floor: f64,
    pub shuffle: bool,
    pub rng_seed: u64,
    pub scale: WhiteningScale,
    /// Weight of the previous running estimate in the moving average.
    pub running_momentum: f64,
}

impl DbnConfig {
    pub fn new(group_size: usize) -> Self {
        DbnConfig {
            group_size,
            eig_floor: DEFAULT_EIG_FLOOR,
            shuffle: false,
            rng_seed: 0,
            scale: WhiteningScale::Gram,
            running_momentum: 0.9,
        }
    }

    pub fn shuffled(group_size: usize, rng_seed: u64) -> Self {
        DbnConfig {
            shuffle: true,
            rng_seed,
            ..DbnConfig::new(group_size)
        }
    }

    pub fn zca_options(&self) -> ZcaOptions {
        ZcaOptions {
            eig_floor: self.eig_floor,
            scale: self.scale,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        if !(self.eig_floor > 0.0) {
            return Err(Error::Config(format!("eig_floor must be positive, got {}", self.eig_floor)));
        }
        if !(0.0..=1.0).contains(&self.running_momentum) {
            return Err(Error::Config("running momentum must be in [0, 1]".into()));
        }
        if !dim.is_multiple_of(self.group_size) {
            return Err(Error::dim(
                "dbn",
                format!("{dim} features are not divisible into groups of {}", self.group_size),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnCache {
    permutation: Permutation,
    groups: GroupCaches,
}

#[derive(Debug, Clone, PartialEq)]
enum GroupCaches {
    Train(Vec<ZcaCache>),
    /// Fixed transforms from running statistics.
    Eval(Vec<Matrix>),
}

impl DbnCache {
    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }
}

/// Whitens consecutive groups of `cfg.group_size` rows independently.
pub fn dbn_forward(x: &Matrix, cfg: &DbnConfig) -> Result<(Matrix, DbnCache)> {
    dbn_forward_permuted(x, cfg, &Permutation::identity(x.rows()))
}

/// `P^-1(DBN(P(x)))` for a fresh permutation drawn from `rng`.
pub fn shuffled_dbn_forward<R: Rng + ?Sized>(x: &Matrix, cfg: &DbnConfig, rng: &mut R) -> Result<(Matrix, DbnCache)> {
    let perm = Permutation::random(x.rows(), rng);
    dbn_forward_permuted(x, cfg, &perm)
}

/// `P^-1(DBN(P(x)))` for a given permutation.
pub fn dbn_forward_permuted(x: &Matrix, cfg: &DbnConfig, perm: &Permutation) -> Result<(Matrix, DbnCache)> {
    let (d, b) = x.shape();
    cfg.validate(d)?;
    if perm.len() != d {
        return Err(Error::dim("dbn_forward", "permutation length differs from feature count"));
    }
    let g = cfg.group_size;
    if b < g + 1 {
        return Err(Error::dim(
            "dbn_forward",
            format!("batch of {b} cannot whiten groups of {g} (needs at least {})", g + 1),
        ));
    }
    let opts = cfg.zca_options();
    let shuffled = perm.apply(x);
    let mut out = Matrix::zeros(d, b);
    let mut caches = Vec::with_capacity(d / g);
    for h in 0..d / g {
        let (y, cache) = whiten_group(&shuffled.row_block(h * g, g), &opts, h)?;
        out.set_rows(h * g, &y);
        caches.push(cache);
    }
    Ok((
        perm.invert(&out),
        DbnCache {
            permutation: perm.clone(),
            groups: GroupCaches::Train(caches),
        },
    ))
}

/// Gradient of the (shuffled) DBN forward that produced `cache`.
pub fn dbn_backward(cache: &DbnCache, dy: &Matrix) -> Result<Matrix> {
    let perm = &cache.permutation;
    if dy.rows() != perm.len() {
        return Err(Error::dim("dbn_backward", "upstream gradient shape"));
    }
    let dy_shuffled = perm.apply(dy);
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    match &cache.groups {
        GroupCaches::Train(groups) => {
            let mut row = 0;
            for c in groups {
                let g = c.centered.rows();
                dx.set_rows(row, &zca_backward(c, &dy_shuffled.row_block(row, g))?);
                row += g;
            }
        }
        GroupCaches::Eval(transforms) => {
            let mut row = 0;
            for w in transforms {
                let g = w.rows();
                dx.set_rows(row, &w.matmul(&dy_shuffled.row_block(row, g))?);
                row += g;
            }
        }
    }
    Ok(perm.invert(&dx))
}

/// Stateful DBN / shuffled-DBN layer.
///
/// Training calls whiten with batch statistics (and, when shuffling, a new
/// permutation each call) and fold the batch mean and full scatter matrix
/// into running estimates. Evaluation reuses the most recent permutation
/// and whitens each group with its block of the running scatter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dbn {
    pub config: DbnConfig,
    pub running_mean: Vec<f64>,
    pub running_scatter: Matrix,
    pub last_permutation: Permutation,
    #[serde(with = "rng_state")]
    rng: ChaCha8Rng,
}

impl Dbn {
    pub fn new(dim: usize, config: DbnConfig) -> Result<Self> {
        config.validate(dim)?;
        Ok(Dbn {
            config,
            running_mean: alloc::vec![0.0; dim],
            running_scatter: Matrix::identity(dim),
            last_permutation: Permutation::identity(dim),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, DbnCache)> {
        let d = self.dim();
        if x.rows() != d {
            return Err(Error::dim("dbn_forward", format!("{} rows, layer has {d}", x.rows())));
        }
        match mode {
            Mode::Train => {
                let perm = if self.config.shuffle {
                    Permutation::random(d, &mut self.rng)
                } else {
                    Permutation::identity(d)
                };
                let out = dbn_forward_permuted(x, &self.config, &perm)?;
                self.update_running(x);
                self.last_permutation = perm;
                Ok(out)
            }
            Mode::Eval => self.forward_eval(x),
        }
    }

    fn update_running(&mut self, x: &Matrix) {
        let (centered, means) = x.center_rows();
        let scatter = centered.gram().scale(self.config.scale.factor(x.cols()));
        let m = self.config.running_momentum;
        for (r, mu) in self.running_mean.iter_mut().zip(&means) {
            *r = m * *r + (1.0 - m) * mu;
        }
        for (r, s) in self
            .running_scatter
            .as_mut_slice()
            .iter_mut()
            .zip(scatter.as_slice())
        {
            *r = m * *r + (1.0 - m) * s;
        }
    }

    fn forward_eval(&self, x: &Matrix) -> Result<(Matrix, DbnCache)> {
        let (d, b) = x.shape();
        let g = self.config.group_size;
        let perm = &self.last_permutation;
        let centered = Matrix::from_fn(d, b, |i, j| x[(i, j)] - self.running_mean[i]);
        let shuffled = perm.apply(&centered);
        let mut out = Matrix::zeros(d, b);
        let mut transforms = Vec::with_capacity(d / g);
        for h in 0..d / g {
            let idx = &perm.forward_map()[h * g..(h + 1) * g];
            let block = self.running_scatter.select_rows(idx).select_cols(idx);
            let eig = sym_eig(&block)?;
            let w = EigenParts {
                vectors: &eig.vectors,
                diag: eig
                    .values
                    .iter()
                    .map(|&l| 1.0 / libm::sqrt(l.max(0.0) + self.config.eig_floor))
                    .collect(),
            }
            .assemble();
            out.set_rows(h * g, &w.matmul(&shuffled.row_block(h * g, g))?);
            transforms.push(w);
        }
        Ok((
            perm.invert(&out),
            DbnCache {
                permutation: perm.clone(),
                groups: GroupCaches::Eval(transforms),
            },
        ))
    }
}

/// Serializes the generator as its seed plus stream position so a restored
/// layer continues the same permutation sequence.
mod rng_state {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct State {
        seed: [u8; 32],
        word_pos_hi: u64,
        word_pos_lo: u64,
    }

    pub fn serialize<S: Serializer>(rng: &ChaCha8Rng, s: S) -> Result<S::Ok, S::Error> {
        let pos = rng.get_word_pos();
        State {
            seed: rng.get_seed(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChaCha8Rng, D::Error> {
        let st = State::deserialize(d)?;
        let mut rng = ChaCha8Rng::from_seed(st.seed);
        rng.set_word_pos(((st.word_pos_hi as u128) << 64) | st.word_pos_lo as u128);
        Ok(rng)
    }
}
