use thiserror::Error;

use crate::moment_model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {value} (allowed {allowed})")]
    OutOfRange { what: &'static str, value: String, allowed: String },

    #[error("invalid moment profile: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProfile(Vec<Violation>),

    #[error("invalid entry law: {0}")]
    InvalidLaw(String),

    #[error("moment table has no entry for {0}")]
    TableTooShort(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operation not supported for model {model}: {reason}")]
    Unsupported { model: String, reason: String },

    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(what: &'static str, value: impl ToString, allowed: impl ToString) -> Error {
    Error::OutOfRange { what, value: value.to_string(), allowed: allowed.to_string() }
}
