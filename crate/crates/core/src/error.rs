use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("near-singular update skipped (|denominator| = {denominator:e}, threshold = {threshold:e})")]
    NearSingularUpdate { denominator: f64, threshold: f64 },

    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate {
        iteration: usize,
        residual_norms: Vec<f64>,
    },

    #[error("search direction is not a descent direction (slope {slope:e})")]
    NotDescentDirection { slope: f64 },

    #[error("line search failed after {evals} evaluations")]
    LineSearchFailed { evals: usize },

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("power iteration image vanished at iteration {iteration}")]
    ZeroImage { iteration: usize },

    #[error("malformed LIBSVM line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },

    #[error("feature indices not strictly increasing on line {line_no}")]
    NonMonotonicIndex { line_no: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("too few samples ({n}) for the requested split")]
    TooFewSamples { n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
