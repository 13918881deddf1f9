use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),
    #[error("invalid degree: {0}")]
    InvalidDegree(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("all supplied functions vanish identically")]
    Degenerate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nonpositive density {value:e} in element {element}")]
    NonPositiveDensity { element: usize, value: f64 },
    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("density row of the Cayley step is singular")]
    SingularDensityUpdate,
    #[error("problem too large for dense mode: {dofs} DOFs exceeds {limit}")]
    TooLarge { dofs: usize, limit: usize },
    #[error("refinement chain is not nested: {0}")]
    NotNested(String),
    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
