use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An index lies outside its admissible range.
    #[error("index out of range: {0}")]
    Range(String),

    /// An input violates a mathematical precondition (asymmetry, negativity, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation requires a model structure (scalar, diagonal, ...) the input lacks.
    #[error("model structure: {0}")]
    Structure(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
