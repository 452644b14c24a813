use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("inconsistent observation data at fine vertex {vertex}: measured {measured:?}, boundary value {boundary:?}")]
    InconsistentData {
        vertex: usize,
        measured: [f64; 2],
        boundary: [f64; 2],
    },

    #[error("continuation failed at Re = {reynolds}: {reason}")]
    Continuation { reynolds: f64, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
