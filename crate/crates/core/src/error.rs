use thiserror::Error;

/// Errors produced anywhere in the testbed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty client dataset")]
    EmptyDataset,

    #[error("empty update list")]
    EmptyUpdates,

    #[error("over-trimming: n = {n}, m = {m} leaves n - 2m < 1")]
    OverTrimming { n: usize, m: usize },

    #[error("too many malicious for Multi-Krum: n = {n}, m = {m} gives c = n - 2m - 3 < 1")]
    TooManyMalicious { n: usize, m: usize },

    #[error("unknown client id {0}")]
    UnknownClient(usize),

    #[error("no compromised data")]
    NoCompromisedData,

    #[error("label {0} has no fitted samples")]
    EmptyLabel(usize),

    #[error("inverse-std direction needs at least 2 reference updates, got {0}")]
    TooFewReferences(usize),

    #[error("non-finite parameters after update (model diverged)")]
    NonFinite,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("missing field: {0}")]
    MissingField(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}
