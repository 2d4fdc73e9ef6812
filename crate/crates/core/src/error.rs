use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {index} has norm below 1e-6 and cannot be normalized")]
    ZeroRow { index: usize },

    #[error("row {index} contains a NaN or infinite entry")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("cached E^T x is stale (max deviation {drift:.3e} > {tolerance:.3e})")]
    StaleCache { drift: f64, tolerance: f64 },

    #[error("swap ({enter}, {leave}) with step {step} leaves the unit box")]
    InfeasibleSwap { enter: usize, leave: usize, step: f64 },

    #[error("negative Frank-Wolfe gap {delta:.3e}")]
    NegativeGap { delta: f64 },

    #[error("selection vector is not integral")]
    NotIntegral,

    #[error("exhaustive search over {count} points exceeds the guard of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("gold set is empty")]
    EmptyGold,

    #[error("intra-list distance needs at least 2 items, got {0}")]
    TooFewItems(usize),

    #[error("bad magic in embedding file (expected \"DKSEL1\")")]
    BadMagic,

    #[error("embedding file truncated at byte {offset} (expected {expected} bytes)")]
    TruncatedFile { offset: u64, expected: u64 },

    #[error("embedding file has {actual} bytes, expected exactly {expected}")]
    TrailingBytes { actual: u64, expected: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a solver failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::StaleCache { .. } | Error::NegativeGap { .. } | Error::NotIntegral
        )
    }
}
