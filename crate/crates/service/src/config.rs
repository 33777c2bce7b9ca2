//! Service settings: a TOML file, then `TUTORBOT_*` environment overrides, then
//! command-line flags (applied by the caller).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tutorbot_core::EngineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Directory holding the session logs and their index.
    pub storage: PathBuf,
    /// Static bearer token; when unset every request is accepted.
    pub token: Option<String>,
    pub catalog: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub locale: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            storage: PathBuf::from("tutorbot-data"),
            token: None,
            catalog: None,
            templates: None,
            locale: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// Applies overrides from a variable lookup (normally `std::env::var`).
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("TUTORBOT_HOST") {
            self.host = v;
        }
        if let Some(v) = get("TUTORBOT_PORT") {
            self.port = v
                .parse()
                .map_err(|e: std::num::ParseIntError| ConfigError::Env { name: "TUTORBOT_PORT".into(), message: e.to_string() })?;
        }
        if let Some(v) = get("TUTORBOT_STORAGE") {
            self.storage = v.into();
        }
        if let Some(v) = get("TUTORBOT_TOKEN") {
            self.token = Some(v);
        }
        if let Some(v) = get("TUTORBOT_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = get("TUTORBOT_TEMPLATES") {
            self.templates = Some(v.into());
        }
        if let Some(v) = get("TUTORBOT_LOCALE") {
            self.locale = Some(v);
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            catalog: self.catalog.clone(),
            templates: self.templates.clone(),
            locale: self.locale.clone(),
            ..Default::default()
        }
    }

    pub fn address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}
