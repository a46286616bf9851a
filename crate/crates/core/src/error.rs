use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("point is off the manifold (violation {violation:.3e} > tolerance {tolerance:.1e})")]
    Infeasible { violation: f64, tolerance: f64 },

    #[error("retraction is undefined: x + t*v vanishes")]
    DegenerateRetraction,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("unsupported regularizer exponent {0}")]
    UnsupportedExponent(f64),

    #[error("block {block}: no closed-form kernel for {pattern}")]
    UnsupportedBlock { block: usize, pattern: String },

    #[error("problem is not in basic form: {0}")]
    NotBasicForm(String),

    #[error("line search on block {block} did not satisfy sufficient decrease after {shrinks} shrinks")]
    LineSearchFailed { block: usize, shrinks: usize },

    #[error("parameters outside the feasible region: {0}")]
    InfeasibleParameters(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),

    #[error("missing iterate history: {0}")]
    MissingHistory(&'static str),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
