//! Experiment configuration: dataset source, code shape, model, training,
//! and evaluation settings, loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hiq_core::config::HashConfig;
use hiq_core::hashopt::RemapMode;
use hiq_core::metric::LossKind;
use hiq_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub hash: HashConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV file (first column integer label). Mutually exclusive with `synthetic`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Per-class fraction of items held out as queries.
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
}

fn default_eval_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub cluster_sep: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden width, required for `one_hidden`.
    #[serde(default)]
    pub hidden: Option<usize>,
    pub init_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    OneHidden,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_top_k")]
    pub top_k: Vec<usize>,
}

fn default_top_k() -> Vec<usize> {
    vec![1, 4, 16]
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            top_k: default_top_k(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .with_context(|| format!("invalid JSON config {}", path.display()))?
        } else {
            toml::from_str(&text)
                .with_context(|| format!("invalid TOML config {}", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.path, &self.dataset.synthetic) {
            (None, None) => bail!("dataset: either `path` or `synthetic` must be given"),
            (Some(_), Some(_)) => {
                bail!("dataset: `path` and `synthetic` are mutually exclusive")
            }
            _ => {}
        }
        if !(self.dataset.eval_fraction > 0.0 && self.dataset.eval_fraction < 1.0) {
            bail!(
                "dataset.eval_fraction: must be in (0, 1), got {}",
                self.dataset.eval_fraction
            );
        }
        self.hash.validate().context("hash")?;
        self.train.validate().context("train")?;
        if self.model.kind == ModelKind::OneHidden && self.model.hidden.is_none() {
            bail!("model.hidden: required for kind = \"one_hidden\"");
        }
        if self.eval.top_k.is_empty() {
            bail!("eval.top_k: must list at least one cutoff");
        }
        Ok(())
    }

    /// The frozen desk-scale reference setup: 8 Gaussian classes in R^16,
    /// a 4-ary two-level code with one active leaf, a linear model, and
    /// 500 iterations of triplet training.
    pub fn reference(seed: u64) -> Self {
        Self {
            dataset: DatasetConfig {
                path: None,
                synthetic: Some(SyntheticConfig {
                    n_classes: 8,
                    per_class: 200,
                    input_dim: 16,
                    cluster_sep: 10.0,
                    seed: 7,
                }),
                eval_fraction: 0.2,
            },
            hash: HashConfig::new(4, 2, 1, 2.0, 1.0).expect("reference hash config"),
            model: ModelConfig {
                kind: ModelKind::Linear,
                hidden: None,
                init_seed: seed * 101,
            },
            train: TrainConfig {
                max_iter: 500,
                classes_per_batch: 8,
                examples_per_class: 4,
                learning_rate: 0.05,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
                lr_decay_factor: 0.3,
                lr_decay_milestones: vec![300],
                loss: LossKind::Triplet { margin: 1.0 },
                remap: RemapMode::PerLevel,
                freeze_base: false,
                seed,
            },
            eval: EvalConfig::default(),
        }
    }
}
