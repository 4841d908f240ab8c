use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input data: {0}")]
    Data(factor_events::Error),
    #[error(transparent)]
    Pipeline(#[from] factor_events::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Data(_) => 4,
            Self::Pipeline(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Data(_) => "data",
            Self::Pipeline(_) => "pipeline",
        }
    }

    /// Single-line JSON written to stderr on failure.
    pub fn record(&self) -> String {
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
