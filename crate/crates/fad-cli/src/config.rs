//! Run configuration: the model, training, and evaluation settings merged
//! into one TOML-serializable document. Command-line flags override file
//! values; the `FAD_SEED` environment variable is the seed fallback when
//! neither a flag nor a config provides one.

use std::path::Path;

use anyhow::{bail, Context, Result};
use fad_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "FAD_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Sampler steps S used at generation time.
    pub steps: usize,
    /// TLCC search half-window in frames.
    pub max_lag: usize,
    /// Clusters per view for the Shannon index.
    pub kmeans_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            steps: 1,
            max_lag: 30,
            kmeans_k: 16,
        }
    }
}

impl RunConfig {
    /// Cross-field consistency; model validation covers clip divisibility
    /// and encoder/denoiser width agreement.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().context("model config")?;
        if self.steps == 0 || self.steps > self.model.k_steps {
            bail!(
                "steps must lie in 1..={}, got {}",
                self.model.k_steps,
                self.steps
            );
        }
        if self.train.batch_size == 0 {
            bail!("train.batch_size must be positive");
        }
        if self.train.epochs == 0 {
            bail!("train.epochs must be positive");
        }
        if self.max_lag == 0 {
            bail!("max_lag must be positive");
        }
        if self.kmeans_k == 0 {
            bail!("kmeans_k must be positive");
        }
        Ok(())
    }
}

/// Loads a TOML run config, or the defaults when no path is given.
pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config '{}'", p.display()))?;
            toml::from_str(&text).with_context(|| format!("cannot parse config '{}'", p.display()))?
        }
    };
    Ok(cfg)
}

/// Seed precedence: explicit flag, then `FAD_SEED`, then the fallback.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got '{text}'")),
        Err(_) => Ok(fallback),
    }
}
