use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected m = {expected}, got m = {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("non-constant exponent at byte {offset}")]
    NonConstantExponent { offset: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow while evaluating {0}")]
    Overflow(String),

    #[error("singular locus: {0}")]
    Singular(String),

    #[error("vanishing gradient at {0}")]
    VanishingGradient(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("root not bracketed: {0}")]
    Bracket(String),

    #[error("sigma search exhausted after {iterations} iterations: {reason}")]
    SigmaExhausted { iterations: usize, reason: String },

    #[error("missing {0}")]
    Missing(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
