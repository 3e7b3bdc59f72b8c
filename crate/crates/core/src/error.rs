use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("breakpoint index {index} out of range 1..={count}")]
    BreakpointIndex { index: usize, count: usize },

    #[error("invalid drift: {0}")]
    InvalidDrift(String),

    #[error("drift spec line {line}: {message}")]
    DriftSyntax { line: usize, message: String },

    #[error("generic piece {piece} has no declared Lipschitz constant")]
    MissingLipschitz { piece: usize },

    #[error("linear growth bound c = {c} violated at x = {x}")]
    GrowthViolation { c: f64, x: f64 },

    #[error("correlation {0} outside [0, 1]")]
    Correlation(f64),

    #[error("invalid bound input: {0}")]
    BoundInput(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid is not a refinement: time {0} missing from the finer grid")]
    IncompatibleGrids(f64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
