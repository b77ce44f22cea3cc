//! `--config` JSON. Every field is optional; omitted fields keep defaults.

use std::path::Path;

use anyhow::Context;
use coughscreen_core::features::SpecAugmentPolicy;
use coughscreen_core::nn::TrainConfig;
use coughscreen_core::pipeline::{CvOptions, FusionConfig, DEFAULT_FOLDS, DEFAULT_PROXY_CLIPS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub train: TrainConfig,
    pub augment: SpecAugmentPolicy,
    pub fusion: FusionConfig,
    pub proxy_clips: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            folds: DEFAULT_FOLDS,
            train: TrainConfig::default(),
            augment: SpecAugmentPolicy::default(),
            fusion: FusionConfig::default(),
            proxy_clips: DEFAULT_PROXY_CLIPS,
        }
    }
}

impl RunConfig {
    /// Reads `path` when given, then applies a `--seed` override.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            k: self.folds,
            seed: self.seed,
            train: self.train,
            augment: self.augment,
            fusion: self.fusion,
            out_dir: None,
        }
    }
}
