use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("undefined for empty set")]
    EmptySet,
    #[error("not an occupied site: {0}")]
    NotOccupied(String),
    #[error("index {0} lies outside the domain")]
    OutOfDomain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("window truncates support: {0}")]
    WindowTruncates(String),
    #[error("set is not eta-aligned; apply eta_replacement first")]
    NotEtaAligned,
    #[error("level too high: {0}")]
    LevelTooHigh(String),
    #[error("divergent step")]
    DivergentStep,
    #[error("recovery requires E compactly inside Omega")]
    NotCompactlyInside,
    #[error("regime rejected: {0}")]
    RegimeRejected(String),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input, as opposed
    /// to failures that occur while a well-posed computation runs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::OutOfDomain(_)
                | Error::Invalid(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotEtaAligned
                | Error::NotCompactlyInside
                | Error::RegimeRejected(_)
                | Error::EmptySet
                | Error::WindowTruncates(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn fmt_index<const D: usize>(i: &[i64; D]) -> String {
    let parts: Vec<String> = i.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}
