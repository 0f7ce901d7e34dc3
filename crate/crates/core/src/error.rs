use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum QfpError {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: &'static str },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    #[error("parameters violate the Lindblad condition (delta = {delta:e})")]
    InvalidLindblad { delta: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension guard exceeded: n = {n} > {max}")]
    DimensionGuard { n: usize, max: usize },

    #[error("not a density matrix: {0}")]
    InvalidState(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error(
        "step size underflow at t = {t} (h = {h:e}); the problem is too stiff for the explicit \
         integrator, reduce the truncation n or use the expm propagator"
    )]
    Stiffness { t: f64, h: f64 },

    #[error(
        "truncation too small: min eigenvalue {min_eigenvalue:e} at t = {t}; increase n or move \
         the initial state away from the top Fock levels"
    )]
    TruncationTooSmall { t: f64, min_eigenvalue: f64 },

    #[error("no near-null vector: smallest singular value {sigma_min:e} above threshold {threshold:e}")]
    NoKernel { sigma_min: f64, threshold: f64 },

    #[error("degenerate kernel vector: trace {trace:e} is numerically zero")]
    DegenerateKernel { trace: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("characteristic-function guard exceeded: |(xi, eta)| = {radius} needs {needed} levels (max {max})")]
    CharacteristicGuard { radius: f64, needed: usize, max: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QfpError>;
