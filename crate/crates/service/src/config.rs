use std::fs;
use std::path::{Path, PathBuf};

use dragrank_core::{ProjectionParams, SessionConfig, TrainerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
}

/// Service settings, read from TOML:
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// data_dir = "sessions"
///
/// [trainer]
/// c = 1.0
///
/// [projection]
/// perplexity = 10.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Where sessions are persisted; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub trainer: TrainerConfig,
    pub projection: ProjectionParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            data_dir: None,
            trainer: TrainerConfig::default(),
            projection: ProjectionParams::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.trainer.validate().map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Loads a config file; a relative `data_dir` resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = cfg.data_dir.as_mut() {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new("")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            trainer: self.trainer,
            projection: self.projection,
        }
    }
}
