use thiserror::Error;

/// Crate-wide error type. Variants group into usage errors (bad arguments or
/// configuration), data errors (unreadable or inconsistent inputs), and
/// runtime divergence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown parameter: {0}")]
    UnknownParameter(String),

    #[error("numeric divergence: {0}")]
    NumericDivergence(String),

    #[error("cannot prune: at least one hidden unit must remain")]
    PruneForbidden,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cluster set is empty")]
    NoClusters,

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: needed {needed}, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("row {row}: {detail}")]
    ParseRow { row: usize, detail: String },

    #[error("infeasible geometry: {0}")]
    Geometry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
