use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] spreadlab::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) if e.is_capacity() => "capacity",
            CliError::Core(spreadlab::Error::Parse { .. }) => "parse",
            CliError::Core(_) => "argument",
            CliError::Io { .. } => "io",
            CliError::Serialize(_) => "internal",
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

/// The object written to standard error on failure.
#[derive(Serialize)]
pub struct ErrorReport<'a> {
    pub schema: u32,
    pub error: ErrorBody<'a>,
}

#[derive(Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'a str,
    pub message: String,
}

impl<'a> ErrorReport<'a> {
    pub fn new(e: &'a CliError) -> Self {
        ErrorReport {
            schema: crate::report::SCHEMA,
            error: ErrorBody {
                kind: e.kind(),
                message: e.to_string(),
            },
        }
    }
}
