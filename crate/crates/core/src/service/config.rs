//! Service configuration: TOML file, then `PATENTFORGE_*` environment overrides.
//!
//! ```toml
//! data_dir = "./data"
//! bind = "127.0.0.1:8080"
//! threshold = 0.1
//! top_k = 5
//! deadline_seconds = 600
//!
//! [[backends]]
//! id = "t5"
//! url = "http://gpu-box:9000/generate"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{BackendRegistry, GenerationOptions, RemoteBackend, DEFAULT_MAX_OUTPUT_TOKENS};
use crate::mapper::{SuggestConfig, DEFAULT_THRESHOLD, DEFAULT_TOP_K};

/// Backend id used for `PATENTFORGE_BACKEND_URL`.
pub const ENV_BACKEND_ID: &str = "remote";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub id: String,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    pub threshold: f64,
    pub top_k: usize,
    pub max_output_tokens: usize,
    pub deadline_seconds: f64,
    pub parallelism: usize,
    /// Shared bearer token; when set every request except `/health` must carry it.
    pub token: Option<String>,
    pub backends: Vec<RemoteBackendConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            bind: "127.0.0.1:8080".to_string(),
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            deadline_seconds: 600.0,
            parallelism: 1,
            token: None,
            backends: Vec::new(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
        name: name.to_string(),
        message: e.to_string(),
    })
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads `path` (if given), applies the process environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::File {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::File {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("PATENTFORGE_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("PATENTFORGE_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("PATENTFORGE_THRESHOLD") {
            self.threshold = env_parse("PATENTFORGE_THRESHOLD", &v)?;
        }
        if let Some(v) = var("PATENTFORGE_TOP_K") {
            self.top_k = env_parse("PATENTFORGE_TOP_K", &v)?;
        }
        if let Some(v) = var("PATENTFORGE_DEADLINE_SECONDS") {
            self.deadline_seconds = env_parse("PATENTFORGE_DEADLINE_SECONDS", &v)?;
        }
        if let Some(v) = var("PATENTFORGE_TOKEN") {
            self.token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(url) = var("PATENTFORGE_BACKEND_URL") {
            self.backends.retain(|b| b.id != ENV_BACKEND_ID);
            self.backends.push(RemoteBackendConfig {
                id: ENV_BACKEND_ID.to_string(),
                url,
                token: var("PATENTFORGE_BACKEND_TOKEN"),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.suggest()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.max_output_tokens == 0 {
            return Err(ConfigError::Invalid("max_output_tokens must be at least 1".into()));
        }
        if !(self.deadline_seconds.is_finite() && self.deadline_seconds > 0.0) {
            return Err(ConfigError::Invalid("deadline_seconds must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        for b in &self.backends {
            if b.id == crate::generation::MOCK_BACKEND_ID {
                return Err(ConfigError::Invalid("backend id `mock` is reserved".into()));
            }
        }
        Ok(())
    }

    pub fn suggest(&self) -> SuggestConfig {
        SuggestConfig {
            threshold: self.threshold,
            k: self.top_k,
        }
    }

    pub fn generation(&self) -> GenerationOptions {
        GenerationOptions {
            max_output_tokens: self.max_output_tokens,
            deadline: Duration::from_secs_f64(self.deadline_seconds),
            parallelism: self.parallelism,
        }
    }

    /// The mock backend plus every configured remote backend.
    pub fn registry(&self) -> Result<BackendRegistry, ConfigError> {
        let mut registry = BackendRegistry::with_mock();
        for b in &self.backends {
            let backend = RemoteBackend::new(&b.id, &b.url)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
                .with_token(b.token.clone());
            registry.register(Arc::new(backend));
        }
        Ok(registry)
    }
}
