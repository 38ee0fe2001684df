use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Argument outside the domain of an operation (non-unit axis,
    /// matrix outside the Lie algebra, bad step size, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The landmark/vector configuration does not satisfy the observability
    /// requirement: at least one landmark and two non-collinear directions.
    #[error("observability assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The jump-set gap cannot be made strictly positive, or the requested
    /// `delta` is not below `(1 - cos theta*) * delta_star`.
    #[error("jump-set gap infeasible: {0}")]
    GapInfeasible(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("divergence detected at t = {t}, j = {j}: {reason}")]
    DivergenceDetected { t: f64, j: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
