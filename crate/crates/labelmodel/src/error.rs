use thiserror::Error;

/// Unified error type for the toolkit.
///
/// `BoundViolation` is separated from the validation-style variants because the
/// CLI maps it to its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("m = {m} exceeds the enumeration cap {cap}; use Gibbs mode")]
    CapExceeded { m: usize, cap: usize },

    #[error("non-finite value in {what}; reduce the step size or check inputs")]
    NonFinite { what: &'static str },

    #[error("invalid dependency: {0}")]
    InvalidDependency(String),

    #[error("gamma must be nonnegative, got {0}")]
    NegativeGamma(f64),

    #[error("scores cover a single class; ROC-AUC needs both labels present")]
    SingleClass,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{path}:{line}:{col}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("{path}:{line}:{col}: value {value} out of range: {msg}")]
    Range {
        path: String,
        line: usize,
        col: usize,
        value: String,
        msg: &'static str,
    },

    #[error("bound violation: {witness}")]
    BoundViolation { witness: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
