use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("eigensolver did not converge within {0} iterations")]
    ConvergenceFailure(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("degenerate kernel {kernel}: diagonal entry {index} is not positive")]
    DegenerateKernel { kernel: usize, index: usize },

    #[error("base kernel {kernel} is not positive semi-definite (min eigenvalue {min_eig:e})")]
    NotPsd { kernel: usize, min_eig: f64 },

    #[error("cross-Gram blocks were not built for this bank")]
    MissingCrossGrams,

    #[error("degenerate direction: nothing to normalize")]
    DegenerateDirection,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unrecognized binary label coding: {0}")]
    LabelCoercion(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("solver diverged")]
    Diverged,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
