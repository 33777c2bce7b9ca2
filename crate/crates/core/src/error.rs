use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised while loading or validating configuration and data files.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} configuration: {message}")]
    Parse { what: &'static str, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("template for {action} ({locale}) uses unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { action: String, locale: String, placeholder: String },
    #[error("template for {action} ({locale}) uses placeholder {{{placeholder}}} that is not available for this action")]
    UnavailablePlaceholder { action: String, locale: String, placeholder: String },
    #[error("no template for action {action} in locale {locale}")]
    MissingTemplate { action: String, locale: String },
}

impl ConfigError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ConfigError::Io { path: path.to_path_buf(), source }
    }
}
