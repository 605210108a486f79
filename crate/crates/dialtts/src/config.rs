//! Run configuration for the training curriculum: a TOML file with
//! `[model]`, `[data]`, and `[stage1]`..`[stage3]` sections. Every field has
//! a default, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub model_dim: usize,
    pub feature_dim: usize,
    pub attn_blocks: usize,
    pub head_hidden: usize,
    pub top_k: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Optional warm-start checkpoint restored before any training stage.
    pub init_checkpoint: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            model_dim: 16,
            feature_dim: 8,
            attn_blocks: 1,
            head_hidden: 32,
            top_k: 2,
            lora_rank: 16,
            lora_alpha: 1.0,
            init_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Number of dialects trained jointly (the gate's class count).
    pub dialects: usize,
    pub train_per_dialect: usize,
    pub holdout_per_dialect: usize,
    /// Examples generated for the held-out new dialect in the adaptation
    /// stage. Its dialect id is `dialects` (the next unused id).
    pub new_dialect_examples: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dialects: 3,
            train_per_dialect: 150,
            holdout_per_dialect: 60,
            new_dialect_examples: 150,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StageSection {
    pub steps: usize,
    pub lr: f64,
    pub warmup: usize,
    pub batch: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for StageSection {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.01,
            warmup: 50,
            batch: 8,
            weight_decay: 0.01,
            seed: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub stage1: StageSection,
    pub stage2: StageSection,
    pub stage3: StageSection,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Overrides every seed (data and stages) from one base value.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.stage1.seed = seed + 101;
        self.stage2.seed = seed + 202;
        self.stage3.seed = seed + 303;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.data.dialects, 3);
        assert_eq!(cfg.stage1.steps, 500);
    }

    #[test]
    fn sections_override_fields() {
        let cfg = RunConfig::parse(
            "[data]\ndialects = 4\n\n[stage1]\nsteps = 10\nlr = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.data.dialects, 4);
        assert_eq!(cfg.stage1.steps, 10);
        assert_eq!(cfg.stage1.lr, 0.5);
        assert_eq!(cfg.stage2.steps, 500);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[data]\nnot_a_key = 1\n").is_err());
    }
}
