//! Run configuration shared by every command.
//!
//! Values resolve as command-line flags over a JSON file over defaults. The
//! file path comes from `--config` or, failing that, [`CONFIG_ENV`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctxgraph::tables::BuildOptions;
use crate::evalkit::ProbeConfig;
use crate::mibounds::MiBenchConfig;
use crate::model::TrainConfig;
use crate::synth::SyntheticSpec;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "INFOALIGN_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into every component that draws randomness.
    pub seed: u64,
    pub graph: BuildOptions,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub synth: SyntheticSpec,
    pub mi: MiBenchConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            graph: BuildOptions::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            synth: SyntheticSpec::default(),
            mi: MiBenchConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    /// Loads `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    /// Sets the master seed everywhere it is consumed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seeds();
        self
    }

    pub fn sync_seeds(&mut self) {
        self.train.seed = self.seed;
        self.train.walk.seed = self.seed;
        self.probe.seed = self.seed;
        self.synth.seed = self.seed;
        self.mi.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.train.validate().map_err(|e| invalid(&e))?;
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.mi.validate().map_err(|e| invalid(&e))?;
        let sim = &self.graph.similarity;
        if !(sim.threshold.is_finite() && (-1.0..=1.0).contains(&sim.threshold)) {
            return Err(ConfigError::Invalid("graph.similarity.threshold must be in [-1, 1]".into()));
        }
        if !(sim.keep_fraction > 0.0 && sim.keep_fraction <= 1.0) {
            return Err(ConfigError::Invalid("graph.similarity.keep_fraction must be in (0, 1]".into()));
        }
        if !(self.graph.top_fraction > 0.0 && self.graph.top_fraction <= 1.0) {
            return Err(ConfigError::Invalid("graph.top_fraction must be in (0, 1]".into()));
        }
        if self.probe.epochs == 0 || !(self.probe.lr > 0.0) || self.probe.weight_decay < 0.0 {
            return Err(ConfigError::Invalid(
                "probe needs epochs > 0, lr > 0, weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
