use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    MissingInput,
    Validation,
    Provider,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    SchemaVersion { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("record id mismatch: {0}")]
    IdMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("could not parse model response ({reason}); raw response kept at {}", .retained.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into()))]
    ReportParse {
        reason: String,
        retained: Option<PathBuf>,
    },

    #[error("unknown {registry} `{name}` (known: {known})")]
    UnknownStrategy {
        registry: &'static str,
        name: String,
        known: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorKind::MissingInput
            }
            Error::Io { .. } => ErrorKind::Io,
            Error::MissingInput(_) => ErrorKind::MissingInput,
            Error::Transport(_) | Error::Provider(_) | Error::ReportParse { .. } => {
                ErrorKind::Provider
            }
            Error::Json { .. }
            | Error::SchemaVersion { .. }
            | Error::Config(_)
            | Error::InvalidInput(_)
            | Error::IdMismatch(_)
            | Error::Dimension { .. }
            | Error::UnknownStrategy { .. } => ErrorKind::Validation,
        }
    }
}
