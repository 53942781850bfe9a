use thiserror::Error;

/// Errors shared by the whole crate. Numeric preconditions surface here;
/// plain misuse (e.g. empty input) is rejected before any computation runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate at observation {index}")]
    NonFinite { index: usize },
    #[error("size mismatch: X has {x} observations, Y has {y}")]
    SizeMismatch { x: usize, y: usize },
    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },
    #[error("not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
    #[error("degenerate sample: all pair distances equal on the {side} side")]
    DegenerateDistances { side: &'static str },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("distance table is not a valid metric matrix: {reason}")]
    BadDistanceTable { reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
