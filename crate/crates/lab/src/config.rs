//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use normgen_core::nn::{Architecture, SgdConfig};
use normgen_core::normalize::NormKind;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Sweep over label-corruption fractions used for pretraining.
    PretrainSweep,
    /// Sweep over the standard deviation of the Gaussian initialization.
    InitStdSweep,
    /// A single run trained and evaluated on random training labels.
    RandomLabels,
}

impl ProtocolKind {
    /// Name used in the results table's `sweep_kind` column.
    pub fn sweep_kind(self) -> &'static str {
        match self {
            ProtocolKind::PretrainSweep => "corruption",
            ProtocolKind::InitStdSweep => "init_std",
            ProtocolKind::RandomLabels => "random_labels",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Cifar100,
}

impl DatasetKind {
    pub fn class_count(self) -> usize {
        match self {
            DatasetKind::Mnist | DatasetKind::Cifar10 => 10,
            DatasetKind::Cifar100 => 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Directory holding the raw IDX or CIFAR binary files.
    pub dir: PathBuf,
    /// Train on a seeded random subset of this many examples.
    #[serde(default)]
    pub subset_size: Option<usize>,
    /// Evaluate on a seeded random subset of the test set.
    #[serde(default)]
    pub test_subset_size: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub delta: f64,
    pub threshold: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { delta: 0.05, threshold: normgen_core::analysis::DEFAULT_TIGHT_THRESHOLD }
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_pretrain_epochs() -> usize {
    30
}
fn default_train_epochs() -> usize {
    80
}
fn default_random_label_epochs() -> usize {
    300
}
fn default_reference_loss() -> f64 {
    0.006
}
fn default_band() -> f64 {
    2.0
}
fn default_init_std() -> f64 {
    0.05
}
fn default_norm() -> String {
    "fro".into()
}
fn default_bins() -> usize {
    50
}
fn default_workers() -> usize {
    1
}
fn default_output() -> PathBuf {
    "runs/experiment".into()
}

/// One experiment: a protocol, its sweep values and every training setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub architecture: Architecture,
    pub dataset: DatasetSpec,
    pub protocol: ProtocolKind,
    /// Corruption fractions or init stds; strictly increasing.
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_train_epochs")]
    pub train_epochs: usize,
    #[serde(default = "default_random_label_epochs")]
    pub random_label_epochs: usize,
    /// Snapshot selection target for the training loss.
    #[serde(default = "default_reference_loss")]
    pub reference_loss: f64,
    /// Warn when no snapshot is within this factor of the reference loss.
    #[serde(default = "default_band")]
    pub reference_band: f64,
    /// Stop training once the training loss falls below the reference.
    #[serde(default)]
    pub stop_below_reference: bool,
    /// Init std for protocols that do not sweep it.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Append a random-label point to the sweep.
    #[serde(default)]
    pub random_label_point: bool,
    #[serde(default)]
    pub optimizer: SgdConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_norm")]
    pub norm: String,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data and output paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.dir.is_relative() {
            cfg.dataset.dir = base.join(&cfg.dataset.dir);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn norm_kind(&self) -> Result<NormKind> {
        Ok(self.norm.parse()?)
    }

    pub fn class_count(&self) -> usize {
        self.dataset.kind.class_count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.protocol != ProtocolKind::RandomLabels {
            if self.sweep_values.is_empty() {
                return bad("sweep_values must not be empty".into());
            }
            if self.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
                return bad(format!("sweep_values must be strictly increasing, got {:?}", self.sweep_values));
            }
        }
        match self.protocol {
            ProtocolKind::PretrainSweep if self.sweep_values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                return bad("corruption fractions must be in [0, 1]".into());
            }
            ProtocolKind::InitStdSweep if self.sweep_values.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                return bad("init stds must be positive".into());
            }
            _ => {}
        }
        if self.train_epochs == 0 || self.random_label_epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.protocol == ProtocolKind::PretrainSweep && self.pretrain_epochs == 0 {
            return bad("pretrain_epochs must be >= 1".into());
        }
        if !(self.reference_loss > 0.0) || !(self.reference_band >= 1.0) {
            return bad("reference_loss must be positive and reference_band >= 1".into());
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive".into());
        }
        if self.workers == 0 || self.histogram_bins == 0 {
            return bad("workers and histogram_bins must be >= 1".into());
        }
        if !self.architecture.supports_classes(self.class_count())
            || (self.architecture == Architecture::Mnist3x34) != (self.dataset.kind == DatasetKind::Mnist)
        {
            return bad(format!("architecture {} does not fit dataset {:?}", self.architecture, self.dataset.kind));
        }
        self.optimizer.validate()?;
        self.norm_kind()?;
        Ok(())
    }
}
