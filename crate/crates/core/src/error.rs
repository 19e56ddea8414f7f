use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: u64,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: u64, column: usize },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The stream ran dry. `delivered` counts the rows handed out before the
    /// request that could not be filled.
    #[error("stream exhausted after {delivered} rows")]
    Exhausted { delivered: u64 },

    #[error("dual ascent interrupted after {completed} of {requested} steps: stream exhausted")]
    DualInterrupted { completed: usize, requested: usize },

    #[error("problem size {size} exceeds the exact solver guard of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for the end-of-data condition of a stream, as opposed to a
    /// malformed row or an I/O failure.
    pub fn is_exhausted(&self) -> bool {
        matches!(self, Error::Exhausted { .. } | Error::DualInterrupted { .. })
    }
}
