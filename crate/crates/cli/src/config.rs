//! TOML run configuration shared by `train` and `bench`.
//!
//! ```toml
//! seed = 17
//!
//! [model]
//! d_model = 128
//! n_heads = 4
//! n_layers = 4
//!
//! [train]
//! lr = 3e-4
//! steps = 2000
//! accumulation = 2
//! prompt_drop = 0.0
//! ```
//!
//! Every key is optional; missing keys take the defaults below.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use voxrnn::lm::LmConfig;
use voxrnn::recurrent::BlockConfig;
use voxrnn::trainer::TrainConfig;

/// Environment variable that, when set, replaces any `--seed` flag.
pub const SEED_ENV: &str = "VOXRNN_SEED";

/// The effective seed: `VOXRNN_SEED` if set, otherwise the flag.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
            Ok(Some(seed))
        }
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(e).with_context(|| format!("reading {SEED_ENV}")),
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialization and the training random stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Must match the data when given; `train` otherwise takes it from the
    /// corpus manifest.
    pub speech_vocab: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            speech_vocab: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    pub steps: usize,
    pub accumulation: usize,
    pub prompt_drop: f64,
    pub warmup_steps: usize,
    /// Write an extra checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lr: d.lr,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            grad_clip: d.grad_clip,
            steps: d.steps,
            accumulation: d.accumulation,
            prompt_drop: d.prompt_drop,
            warmup_steps: d.warmup_steps,
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid run configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Loads `path`, or the defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn block_config(&self) -> Result<BlockConfig> {
        let m = &self.model;
        Ok(BlockConfig::new(m.d_model, m.n_heads, m.n_layers)?)
    }

    /// Model shape for a corpus with `speech_vocab` codewords.
    pub fn lm_config(&self, speech_vocab: usize) -> Result<LmConfig> {
        if let Some(v) = self.model.speech_vocab {
            if v != speech_vocab {
                return Err(voxrnn::Error::Config(format!(
                    "configuration asks for speech_vocab {v} but the data has {speech_vocab}"
                ))
                .into());
            }
        }
        Ok(LmConfig::new(self.block_config()?, speech_vocab)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            grad_clip: t.grad_clip,
            steps: t.steps,
            accumulation: t.accumulation,
            seed: self.seed,
            prompt_drop: t.prompt_drop,
            warmup_steps: t.warmup_steps,
        }
    }
}
