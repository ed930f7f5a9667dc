use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid function `{name}` has a non-finite value at index {index}")]
    NonFinite { name: String, index: usize },

    #[error("domain does not intersect the grid")]
    EmptyIntersection,

    #[error("point {0:?} is within one cell of the grid boundary")]
    BoundaryPoint(Vec<usize>),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("singular point: operator with exponent {alpha} is undefined at p = 0")]
    SingularPoint { alpha: f64 },

    #[error("degenerate point: ellipticity profile vanishes at p = {0:?}")]
    DegeneratePoint(Vec<f64>),

    #[error("witness trivial (x itself): point {0} lies in the contact set")]
    WitnessTrivial(usize),

    #[error("target region escapes the source grid")]
    EscapesGrid,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
