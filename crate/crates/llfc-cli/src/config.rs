//! TOML experiment configuration. Unknown keys are hard errors so a typo
//! can never silently change an experiment.

use crate::error::{CliError, Result};
use llfc::nn::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: SourceConfig,
    /// When set, the generated data is split and analyses run on the
    /// held-out part; training always uses the train part.
    #[serde(default)]
    pub train_fraction: Option<f64>,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum SourceConfig {
    Blobs {
        seed: u64,
        n_per_class: usize,
        classes: usize,
        dim: usize,
        spread: f64,
    },
    Spirals {
        seed: u64,
        n_per_class: usize,
        classes: usize,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: usize,
    },
}

impl SourceConfig {
    #[allow(dead_code)] // counterpart of set_seed, used in tests
    pub fn seed(&self) -> Option<u64> {
        match self {
            SourceConfig::Blobs { seed, .. } | SourceConfig::Spirals { seed, .. } => Some(*seed),
            SourceConfig::Idx { .. } => None,
        }
    }

    pub fn set_seed(&mut self, new: u64) {
        match self {
            SourceConfig::Blobs { seed, .. } | SourceConfig::Spirals { seed, .. } => *seed = new,
            SourceConfig::Idx { .. } => {}
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainingConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            beta2: d.beta2,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            epochs: d.epochs,
            seed: d.seed,
            lr_drop_epochs: d.lr_drop_epochs,
            lr_drop_factor: d.lr_drop_factor,
        }
    }
}

impl TrainingConfig {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: match self.optimizer {
                OptimizerKind::Sgd => Optimizer::SgdMomentum,
                OptimizerKind::Adam => Optimizer::Adam,
            },
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            beta2: self.beta2,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            lr_drop_epochs: self.lr_drop_epochs.clone(),
            lr_drop_factor: self.lr_drop_factor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum MethodConfig {
    /// Train jointly for `k_steps`, then fork with distinct shuffle seeds.
    Spawn { k_steps: usize, seed_a: u64, seed_b: u64 },
    /// Two fully independent runs, optionally aligned afterwards.
    Independent {
        seed_a: u64,
        seed_b: u64,
        #[serde(default)]
        matching: Matching,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    Weight,
    Activation,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Curve,
    Llfc,
    Conditions,
    Stitch,
    Srank,
}

pub const ALL_SUITES: [Suite; 5] = [
    Suite::Curve,
    Suite::Llfc,
    Suite::Conditions,
    Suite::Stitch,
    Suite::Srank,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub alpha_points: usize,
    pub suites: Vec<Suite>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha_points: 21,
            suites: ALL_SUITES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv],
        }
    }
}

impl ExperimentConfig {
    pub fn parse(raw: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(raw).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)?;
        let cfg = Self::parse(&raw)?;
        Ok((cfg, raw))
    }

    fn validate(&self) -> Result<()> {
        if self.model.dims.len() < 2 || self.model.dims.iter().any(|&d| d == 0) {
            return Err(CliError::Config(
                "model.dims needs at least two nonzero entries".into(),
            ));
        }
        if self.analysis.alpha_points < 2 {
            return Err(CliError::Config("analysis.alpha_points must be >= 2".into()));
        }
        if let Some(f) = self.dataset.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(
                    "dataset.train_fraction must lie in (0, 1)".into(),
                ));
            }
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats must not be empty".into()));
        }
        if let SourceConfig::Idx { images, labels, .. } = &self.dataset.source {
            for p in [images, labels] {
                if !p.exists() {
                    return Err(CliError::Config(format!("missing IDX file {}", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Override every seed a subcommand `--seed` flag is meant to control.
    pub fn override_seed(&mut self, seed: u64) {
        self.training.seed = seed;
        self.dataset.source.set_seed(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[dataset]
train_fraction = 0.8

[dataset.source.blobs]
seed = 7
n_per_class = 100
classes = 3
dim = 2
spread = 1.0

[model]
dims = [2, 16, 16, 3]

[training]
epochs = 5

[method.spawn]
k_steps = 10
seed_a = 1
seed_b = 2
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::parse(GOOD).unwrap();
        assert_eq!(cfg.model.dims, vec![2, 16, 16, 3]);
        assert_eq!(cfg.training.epochs, 5);
        assert_eq!(cfg.analysis.alpha_points, 21);
        assert_eq!(cfg.analysis.suites.len(), 5);
        assert!(matches!(cfg.method, MethodConfig::Spawn { k_steps: 10, .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = GOOD.replace("epochs = 5", "epochs = 5\nlr_warmup = 3");
        let err = ExperimentConfig::parse(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn two_method_variants_rejected() {
        let bad = format!(
            "{GOOD}\n[method.independent]\nseed_a = 1\nseed_b = 2\n"
        );
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn seed_override_reaches_source_and_training() {
        let mut cfg = ExperimentConfig::parse(GOOD).unwrap();
        cfg.override_seed(99);
        assert_eq!(cfg.training.seed, 99);
        assert_eq!(cfg.dataset.source.seed(), Some(99));
    }

    #[test]
    fn bad_fraction_rejected() {
        let bad = GOOD.replace("train_fraction = 0.8", "train_fraction = 1.5");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }
}
