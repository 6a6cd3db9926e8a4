use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("inadmissible geometry: {0}")]
    Inadmissible(String),
    #[error("coefficient matrix is not elliptic (min eigenvalue {0:e})")]
    NotElliptic(f64),
    #[error("negative discriminant {0:e} in root symbol (coefficients not elliptic)")]
    NegativeDiscriminant(f64),
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular linear system")]
    Singular,
    #[error("symbol provides xi-derivatives up to order {available}, {needed} required")]
    MissingDerivative { needed: usize, available: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("time step {dt:e} exceeds stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("reference state does not solve the evolution system (residual {0:e})")]
    NotSolving(f64),
    #[error("{0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(String),
    #[error("file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
