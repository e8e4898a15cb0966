use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset integrity: {0}")]
    Integrity(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("incomplete round: {0}")]
    IncompleteRound(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("key error: {0}")]
    Key(String),

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("training diverged at round {round}: {message}")]
    Diverged { round: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Integrity(_) => "integrity",
            Error::Protocol(_) => "protocol",
            Error::IncompleteRound(_) => "incomplete_round",
            Error::Config(_) => "config",
            Error::Key(_) => "key",
            Error::Bounds(_) => "bounds",
            Error::Diverged { .. } => "diverged",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
