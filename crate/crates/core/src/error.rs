use thiserror::Error;

/// Errors raised by the modelling, fitting, and corpus routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("event at t={time} lies outside the observation window [0, {window}]")]
    EventOutsideWindow { time: f64, window: f64 },

    #[error("{malformed} of {total} rows malformed (first: line {first_line}: {first_message})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        first_line: usize,
        first_message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
