use std::path::PathBuf;

use qvkit_core::attacks::AttackError;
use qvkit_core::metrics::MetricsError;
use qvkit_core::schemes::SchemeError;
use qvkit_core::stake::{CsvError, StakeError};
use qvkit_core::transform::TransformError;
use qvkit_core::utility::UtilityError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: CsvError },
    #[error("{path}: line {line}, column {column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Stake(#[from] StakeError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Machine-readable form written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

impl CliError {
    pub fn json(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Csv { source, .. } => match source {
                CsvError::Io(_) => "io",
                CsvError::Domain { .. } => "domain",
                _ => "parse",
            },
            CliError::Json { .. } => "parse",
            CliError::Usage(_) => "usage",
            CliError::Stake(_) => "stake",
            CliError::Scheme(_) => "scheme",
            CliError::Metrics(_) => "metrics",
            CliError::Transform(_) => "transform",
            CliError::Utility(_) => "utility",
            CliError::Attack(_) => "attack",
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (path, line) = match self {
            CliError::Io { path, .. } => (Some(path), None),
            CliError::Csv { path, source } => (Some(path), source.line()),
            CliError::Json { path, line, .. } => (Some(path), Some(*line as u64)),
            _ => (None, None),
        };
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            path: path.map(|p| p.display().to_string()),
            line,
        }
    }
}
