use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid sampling design: {0}")]
    InvalidDesign(String),

    #[error("insufficient sample: need at least {needed} draws, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("empty population")]
    EmptyPopulation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("invalid panel for subject {subject}: {reason}")]
    InvalidPanel { subject: usize, reason: String },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    #[error("invalid cost: {0}")]
    InvalidCost(f64),

    #[error("insufficient replications: need at least {needed}, got {got}")]
    InsufficientReplication { needed: usize, got: usize },

    #[error("data ingestion error at line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
