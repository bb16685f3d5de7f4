use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry spec: {0}")]
    InvalidSpec(String),
    #[error("vertex count {count} exceeds the configured maximum {limit}")]
    ResourceLimit { count: usize, limit: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid radii: {0}")]
    InvalidRadii(String),
    #[error("horizon {horizon} exceeds graph radius {radius}")]
    HorizonTooLarge { horizon: usize, radius: usize },
    #[error("function does not vanish on the boundary (vertex {vertex})")]
    NonzeroBoundary { vertex: usize },
    #[error("operator is not positive definite: lambda_min = {lambda_min:e}")]
    NotPositive { lambda_min: f64 },
    #[error("function is not positive at vertex {vertex}")]
    NotPositiveFunction { vertex: usize },
    #[error("h is not P-harmonic: residual {residual:e} exceeds {tolerance:e}")]
    NotHarmonic { residual: f64, tolerance: f64 },
    #[error("domain monotonicity violated at level {level} by {excess:e}")]
    Monotonicity { level: usize, excess: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("series diverged at term {term} (ratio {ratio})")]
    Divergence { term: usize, ratio: f64 },
    #[error("positivity failure at vertex {vertex}")]
    Positivity { vertex: usize },
    #[error("dense computation on {size} vertices exceeds the limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("Green entry underflow at pair ({x}, {y})")]
    Underflow { x: usize, y: usize },
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("empty sample")]
    EmptySample,
    #[error("negative kernel entry {value:e} in the lower-fit region")]
    NegativeKernel { value: f64 },
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
