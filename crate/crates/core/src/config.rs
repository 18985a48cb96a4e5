//! Pipeline configuration file.
//!
//! A TOML document with one table per stage. Every key is optional;
//! unknown keys are rejected. Example:
//!
//! ```toml
//! seed = 7
//!
//! [stft]
//! sample_rate = 8000
//! frame_len = 256
//! hop = 64
//!
//! [embedder]
//! sigma = 0.3
//!
//! [mbn]
//! clusterings = 400
//! delta = 0.0
//!
//! [separate]
//! sources = 2
//! use_mbn = true
//! ```
//!
//! When the top-level `seed` is present it overrides `embedder.seed`,
//! `mbn.seed` and `separate.kmeans_seed` with values derived from it.
//! `mbn.n_classes` always follows `separate.sources`, and `mbn.output_dim`
//! defaults to it.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpcl::DEFAULT_EMBEDDING_DIM;
use crate::features::DEFAULT_FLOOR;
use crate::mbn::MbnConfig;
use crate::separate::SeparateConfig;
use crate::signal::{SampleFormat, StftConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Magnitude floor applied before taking logs.
    pub floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR }
    }
}

/// Settings of the oracle embedder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// `"float32"` or `"pcm16"`.
    pub format: SampleFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub stft: StftConfig,
    pub features: FeatureConfig,
    pub embedder: EmbedderConfig,
    pub mbn: MbnConfig,
    pub separate: SeparateConfig,
    pub output: OutputConfig,
}

/// Seed for stage `stage` derived from a master seed. Kept below 2^63 so
/// it can be written back as a TOML integer.
pub fn derive_seed(master: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stage);
    rng.next_u64() >> 1
}

impl PipelineConfig {
    /// Parses, fills derived values and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
        let has_output_dim = table
            .get("mbn")
            .and_then(|m| m.as_table())
            .is_some_and(|m| m.contains_key("output_dim"));
        let mut cfg: PipelineConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(field_of(&e), e.message().to_string()))?;
        if !has_output_dim {
            cfg.mbn.output_dim = cfg.separate.sources;
        }
        cfg.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_toml_str(&text).map_err(|e| e.at(path))
    }

    /// Replaces the master seed and re-derives the stage seeds.
    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.seed = Some(seed);
        self.finish()
    }

    fn finish(mut self) -> Result<Self> {
        if let Some(s) = self.seed {
            self.embedder.seed = derive_seed(s, 1);
            self.mbn.seed = derive_seed(s, 2);
            self.separate.kmeans_seed = derive_seed(s, 3);
        }
        self.mbn.n_classes = self.separate.sources;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if !(self.features.floor.is_finite() && self.features.floor > 0.0) {
            return Err(Error::config("features.floor", format!("must be positive, got {}", self.features.floor)));
        }
        if !(self.embedder.sigma.is_finite() && self.embedder.sigma >= 0.0) {
            return Err(Error::config("embedder.sigma", format!("must be >= 0, got {}", self.embedder.sigma)));
        }
        self.separate.validate()?;
        if self.embedder.dim < self.separate.sources {
            return Err(Error::config(
                "embedder.dim",
                format!("{} is smaller than separate.sources = {}", self.embedder.dim, self.separate.sources),
            ));
        }
        if self.mbn.n_classes != self.separate.sources {
            return Err(Error::config("mbn.n_classes", "must equal separate.sources"));
        }
        self.mbn.validate()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn field_of(e: &toml::de::Error) -> String {
    // toml reports the unknown or mistyped key in its message; the span is
    // not mapped back to a dotted path, so name the whole document.
    let msg = e.message();
    match msg.find('`') {
        Some(a) => msg[a + 1..].split('`').next().unwrap_or("config").to_string(),
        None => "config".to_string(),
    }
}
