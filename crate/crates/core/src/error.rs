use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point (w={w}, i={i}) lies outside the surrogate domain {domain}")]
    Domain { w: f64, i: f64, domain: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("design matrix is rank deficient: rank {rank} < {needed} unknowns")]
    Rank { rank: usize, needed: usize },

    #[error("fitted surface is not monotone: {0}")]
    Monotonicity(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
