use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single rejected configuration field.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", format_fields(.0))]
    Config(Vec<FieldError>),

    #[error("design state error: {0}")]
    State(String),

    #[error("maximum likelihood estimate is undefined: {0}")]
    UndefinedMle(String),

    #[error("probit fit does not identify the quantile: {0}")]
    NonIdentifiable(String),

    #[error("target probability {p} is outside the fitted rate span [{low}, {high}]")]
    OutOfRange { p: f64, low: f64, high: f64 },

    #[error("singular covariance: {0}")]
    Singular(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("session {0} is not active")]
    SessionClosed(String),

    #[error("stale recommendation: expected echo {expected}, got {got}")]
    StaleEcho { expected: usize, got: usize },

    #[error("responder failed: {0}")]
    Responder(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config(vec![FieldError::new(field, message)])
    }

    /// True for failures caused by the data rather than by the caller.
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            Error::UndefinedMle(_)
                | Error::NonIdentifiable(_)
                | Error::OutOfRange { .. }
                | Error::Singular(_)
        )
    }
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.field, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}
