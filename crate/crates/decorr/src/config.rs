//! Experiment configuration: a TOML file with one table per concern, plus
//! `key.path=value` overrides applied before deserialization.

use std::path::{Path, PathBuf};

use decorr_core::data::AugmentationPolicy;
use decorr_core::diagnostics::{ProbeConfig, DEFAULT_DIAGNOSTIC_BATCH, DEFAULT_KNN_K, DEFAULT_RANK_TOL, DEFAULT_VAR_FLOOR};
use decorr_core::layers::{BnConfig, DbnConfig, WhiteningScale, DEFAULT_EIG_FLOOR};
use decorr_core::model::{EncoderSpec, NormVariant, TrainConfig};
use decorr_core::ssl::ObjectiveKind;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian class blobs; the last `test_per_class` of each class are
    /// held out for evaluation.
    Synthetic {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
    Cifar10 {
        train_paths: Vec<PathBuf>,
        test_paths: Vec<PathBuf>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            classes: 10,
            per_class: 200,
            test_per_class: 50,
            dim: 32,
            separation: 6.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Learnable scale and shift in the hidden batch norms.
    pub hidden_affine: bool,
    pub hidden_epsilon: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: vec![64, 64],
            output_dim: 2,
            hidden_affine: true,
            hidden_epsilon: 0.0,
        }
    }
}

/// The normalization applied to the projection output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormConfig {
    None,
    Bn {
        #[serde(default)]
        epsilon: f64,
        #[serde(default)]
        affine: bool,
    },
    Dbn {
        group_size: usize,
        #[serde(default)]
        whitening: WhiteningScale,
        #[serde(default = "default_eig_floor")]
        eig_floor: f64,
    },
    ShuffledDbn {
        group_size: usize,
        #[serde(default)]
        whitening: WhiteningScale,
        #[serde(default = "default_eig_floor")]
        eig_floor: f64,
    },
}

fn default_eig_floor() -> f64 {
    DEFAULT_EIG_FLOOR
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig::Bn {
            epsilon: 0.0,
            affine: false,
        }
    }
}

impl NormConfig {
    pub fn group_size(&self) -> Option<usize> {
        match *self {
            NormConfig::Dbn { group_size, .. } | NormConfig::ShuffledDbn { group_size, .. } => Some(group_size),
            _ => None,
        }
    }

    /// The layer variant; shuffled DBN draws its permutations from a stream
    /// seeded by `seed`.
    pub fn variant(&self, seed: u64) -> NormVariant {
        match *self {
            NormConfig::None => NormVariant::None,
            NormConfig::Bn { epsilon, affine } => NormVariant::BatchNorm(BnConfig {
                epsilon,
                affine,
                ..BnConfig::default()
            }),
            NormConfig::Dbn {
                group_size,
                whitening,
                eig_floor,
            } => NormVariant::Dbn(DbnConfig {
                scale: whitening,
                eig_floor,
                ..DbnConfig::new(group_size)
            }),
            NormConfig::ShuffledDbn {
                group_size,
                whitening,
                eig_floor,
            } => NormVariant::Dbn(DbnConfig {
                scale: whitening,
                eig_floor,
                ..DbnConfig::shuffled(group_size, seed)
            }),
        }
    }
}

/// Which activations feed the nearest-neighbour evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTap {
    /// The last hidden block, i.e. the input of the final projection layer.
    #[default]
    Hidden,
    /// The normalized projection.
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Epochs between metric rows; 0 records only the initial row.
    pub cadence: usize,
    /// Training samples in the fixed diagnostic batch.
    pub batch: usize,
    pub knn_k: usize,
    pub knn_features: FeatureTap,
    pub var_floor: f64,
    pub rank_tol: f64,
    pub probe: ProbeConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            cadence: 1,
            batch: DEFAULT_DIAGNOSTIC_BATCH,
            knn_k: DEFAULT_KNN_K,
            knn_features: FeatureTap::default(),
            var_floor: DEFAULT_VAR_FLOOR,
            rank_tol: DEFAULT_RANK_TOL,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub augment: AugmentationPolicy,
    pub encoder: EncoderConfig,
    pub norm: NormConfig,
    pub objective: ObjectiveKind,
    pub train: TrainConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        if let (Some(user), toml::Value::Table(defaults)) = (value.as_table_mut(), Self::default().to_value()) {
            fill_defaults(user, &defaults);
        }
        Self::from_value(value)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(|e: toml::de::Error| RunError::Config(e.to_string()))
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serializes to TOML")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Returns a copy with `key=value` applied. Changing a `kind` keeps the
    /// sibling settings if the new variant accepts them and drops them
    /// otherwise.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let mut value = self.to_value();
        apply_override(&mut value, assignment)?;
        match Self::from_value(value.clone()) {
            Ok(cfg) => Ok(cfg),
            Err(e) => {
                let key = assignment.split_once('=').map_or(assignment, |(k, _)| k).trim();
                let Some(parent) = key.strip_suffix(".kind") else {
                    return Err(e);
                };
                let table = parent
                    .split('.')
                    .try_fold(&mut value, |node, part| node.get_mut(part))
                    .and_then(toml::Value::as_table_mut);
                match table {
                    Some(t) => t.retain(|k, _| k == "kind"),
                    None => return Err(e),
                }
                Self::from_value(value).map_err(|_| e)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Synthetic { dim, .. } => *dim,
            DatasetSpec::Cifar10 { .. } => decorr_core::data::IMAGE_LEN,
        }
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            input_dim: self.input_dim(),
            hidden: self.encoder.hidden.clone(),
            output_dim: self.encoder.output_dim,
            hidden_norm: BnConfig {
                epsilon: self.encoder.hidden_epsilon,
                affine: self.encoder.hidden_affine,
                ..BnConfig::default()
            },
            head: self.norm.variant(self.train.seed.wrapping_add(NORM_STREAM)),
        }
    }

    /// Every check that can fail before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: decorr_core::Error| RunError::Config(e.to_string());
        self.train.validate().map_err(cfg_err)?;
        self.augment.validate(self.input_dim()).map_err(cfg_err)?;
        let d = self.encoder.output_dim;
        if d == 0 || self.encoder.hidden.contains(&0) {
            return Err(RunError::Config("layer widths must be positive".into()));
        }
        let batch = self.train.batch_size;
        match self.norm.variant(0) {
            NormVariant::Dbn(dbn) => {
                dbn.validate(d).map_err(cfg_err)?;
                if batch < dbn.group_size + 1 {
                    return Err(RunError::Config(format!(
                        "batch_size {batch} is too small to whiten groups of {}; need at least {}",
                        dbn.group_size,
                        dbn.group_size + 1
                    )));
                }
            }
            NormVariant::BatchNorm(bn) => bn.validate().map_err(cfg_err)?,
            NormVariant::None => {}
        }
        if batch < 2 {
            return Err(RunError::Config("batch_size must be at least 2".into()));
        }
        let diag = &self.diagnostics;
        if diag.batch < 2 || diag.knn_k == 0 {
            return Err(RunError::Config("diagnostic batch must be >= 2 and knn_k >= 1".into()));
        }
        if let NormVariant::Dbn(dbn) = self.norm.variant(0) {
            if diag.batch < dbn.group_size + 1 {
                return Err(RunError::Config("diagnostic batch too small for the whitening group".into()));
            }
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                per_class,
                test_per_class,
                dim,
                separation,
                ..
            } => {
                if *classes == 0 || *dim == 0 || *test_per_class == 0 || per_class <= test_per_class {
                    return Err(RunError::Config(
                        "synthetic data needs classes, dim, test_per_class > 0 and per_class > test_per_class".into(),
                    ));
                }
                if separation.is_nan() || *separation < 0.0 {
                    return Err(RunError::Config("separation must be >= 0".into()));
                }
                let train_n = classes * (per_class - test_per_class);
                if batch > train_n {
                    return Err(RunError::Config(format!(
                        "batch_size {batch} exceeds the {train_n} training samples"
                    )));
                }
            }
            DatasetSpec::Cifar10 {
                train_paths,
                test_paths,
            } => {
                if train_paths.is_empty() || test_paths.is_empty() {
                    return Err(RunError::Config("cifar10 needs train and test files".into()));
                }
                if let Some(p) = train_paths.iter().chain(test_paths).find(|p| !p.is_file()) {
                    return Err(RunError::Config(format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Offset separating the permutation stream of shuffled DBN from the
/// initialization stream.
const NORM_STREAM: u64 = 0x5eed_0001;

/// Parse `a.b.c=value` and store it in the table tree. The value is read as
/// a TOML literal when possible and as a bare string otherwise.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(RunError::Config(format!("bad override key `{key}`")));
    }
    let value = parse_literal(raw.trim());
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("`{key}` descends into a non-table value")))?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Copy default settings into every table the user left incomplete. A table
/// whose `kind` differs from the default's is left to the variant's own
/// defaults.
fn fill_defaults(user: &mut toml::Table, defaults: &toml::Table) {
    if let (Some(u), Some(d)) = (user.get("kind"), defaults.get("kind")) {
        if u != d {
            return;
        }
    }
    for (k, dv) in defaults {
        match (user.get_mut(k), dv) {
            (None, _) => {
                user.insert(k.clone(), dv.clone());
            }
            (Some(toml::Value::Table(ut)), toml::Value::Table(dt)) => fill_defaults(ut, dt),
            _ => {}
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    match toml::from_str::<Wrapper>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
