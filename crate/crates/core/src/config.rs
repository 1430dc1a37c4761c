//! Run configuration shared by the CLI, experiments and reports.
//!
//! The file format is TOML. Every field has a default, so an empty file is a
//! valid configuration that reproduces the desk-scale experiments.
//!
//! ```
//! use halo_puf::config::RunConfig;
//!
//! let cfg = RunConfig::from_toml_str(r#"
//!     [geometry]
//!     preset = "desk"
//!     pages_per_block = 16
//!
//!     [params]
//!     read_flip_prob = 0.4
//!
//!     [experiment]
//!     chips = 8
//! "#).unwrap();
//! assert_eq!(cfg.geometry().unwrap().pages_per_block, 16);
//! assert_eq!(cfg.params.read_flip_prob, 0.4);
//! assert_eq!(cfg.experiment.trials, 250);
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::flash::{Geometry, VariationParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryPreset {
    #[default]
    Desk,
    Full,
}

/// A preset with optional per-field overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub preset: GeometryPreset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks_per_chip: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pages_per_block: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_bytes_per_page: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spare_bytes_per_page: Option<u32>,
}

impl GeometryConfig {
    pub fn resolve(&self) -> Geometry {
        let base = match self.preset {
            GeometryPreset::Desk => Geometry::DESK_SCALE,
            GeometryPreset::Full => Geometry::FULL_SCALE,
        };
        Geometry {
            blocks_per_chip: self.blocks_per_chip.unwrap_or(base.blocks_per_chip),
            pages_per_block: self.pages_per_block.unwrap_or(base.pages_per_block),
            data_bytes_per_page: self.data_bytes_per_page.unwrap_or(base.data_bytes_per_page),
            spare_bytes_per_page: self
                .spare_bytes_per_page
                .unwrap_or(base.spare_bytes_per_page),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Seed of the first chip; chip `i` of an experiment uses `fabrication + i`.
    pub fabrication: u64,
    /// Noise-stream seed. Derived from the fabrication seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<u64>,
    /// Seed for challenge layouts and protocol nonces in experiments.
    pub layout: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            fabrication: 1,
            noise: None,
            layout: 0x4841_4c4f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub chip: PathBuf,
    pub store: PathBuf,
    pub reports: PathBuf,
    pub telemetry: PathBuf,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            chip: "chip.hsim".into(),
            store: "maps.jsonl".into(),
            reports: "reports".into(),
            telemetry: "telemetry.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub host: String,
    pub port: u16,
    /// Per-message receive timeout.
    pub timeout_ms: u64,
    /// Extra attempts with fresh challenges after a failed session.
    pub retries: u32,
    pub telemetry_interval_ms: u64,
    pub telemetry_frames: u32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 7878,
            timeout_ms: 5000,
            retries: 2,
            telemetry_interval_ms: 10_000,
            telemetry_frames: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chips: usize,
    pub trials: usize,
    pub response_bits: usize,
    /// Stable bytes required per side for a page to be accepted.
    pub min_quota: usize,
    pub aging_checkpoints: Vec<f64>,
    pub aging_responses: usize,
    /// Blocks enrolled per chip in an aging sweep.
    pub aging_blocks: u32,
    pub bench_iterations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            chips: 50,
            trials: 250,
            response_bits: 512,
            min_quota: 256,
            aging_checkpoints: vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0],
            aging_responses: 100,
            aging_blocks: 10,
            bench_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "geometry")]
    pub geometry_config: GeometryConfig,
    pub params: VariationParams,
    pub seeds: SeedConfig,
    pub paths: PathConfig,
    pub network: NetworkConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        let g = self.geometry_config.resolve();
        g.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry()?;
        self.params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.experiment;
        if e.response_bits == 0 || !e.response_bits.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!(
                "response_bits must be a positive even count, got {}",
                e.response_bits
            )));
        }
        if e.aging_checkpoints.iter().any(|c| !(0.0..=1.0).contains(c))
            || e.aging_checkpoints.windows(2).any(|w| w[0] > w[1])
        {
            return Err(ConfigError::Invalid(
                "aging_checkpoints must be sorted values in [0, 1]".into(),
            ));
        }
        if self.network.timeout_ms == 0 {
            return Err(ConfigError::Invalid("timeout_ms must be positive".into()));
        }
        Ok(())
    }
}
