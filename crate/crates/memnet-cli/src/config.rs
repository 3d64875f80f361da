//! JSON config file. Every key is optional; command-line flags win over
//! file values, file values win over built-in defaults. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<String>,
    pub steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub root_dim: Option<usize>,
    pub latent_dim: Option<usize>,
    pub capacity: Option<usize>,
    pub adam: AdamFileConfig,
    pub dataset: Option<String>,
    pub per_class: Option<usize>,
    pub episodes: Option<usize>,
    pub q_episodes: Option<usize>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub downsample: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub samples: Option<usize>,
    pub held_out: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamFileConfig {
    pub alpha: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn adam_config(&self) -> memnet::tensor::AdamConfig {
        let defaults = memnet::tensor::AdamConfig::default();
        memnet::tensor::AdamConfig {
            alpha: self.adam.alpha.unwrap_or(defaults.alpha),
            beta1: self.adam.beta1.unwrap_or(defaults.beta1),
            beta2: self.adam.beta2.unwrap_or(defaults.beta2),
            epsilon: self.adam.epsilon.unwrap_or(defaults.epsilon),
        }
    }
}

/// flag > config file > default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
