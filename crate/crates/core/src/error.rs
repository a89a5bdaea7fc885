use thiserror::Error;

/// Errors shared by all workbench modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Rejection sampling could not satisfy the minimum-distance
    /// constraints within the retry budget; the area is too small for the
    /// requested unit counts.
    #[error("placement infeasible after {retries} retries: {reason}")]
    PlacementInfeasible { retries: u64, reason: String },

    /// Distances must be strictly positive for the path-loss model.
    #[error("invalid distance: {0} m (must be > 0)")]
    InvalidDistance(f64),

    /// Spatial correlation magnitude must lie in [0, 1].
    #[error("invalid correlation magnitude: {0} (must be in [0, 1])")]
    InvalidCorrelation(f64),

    /// Training data handed to a surrogate is unusable.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Mismatched dimensions or otherwise malformed operands.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix factorization failed even after escalating jitter, or a
    /// computation produced non-finite values.
    #[error("numerical error: {0}")]
    NumericalError(String),

    /// The request is outside the implemented scope.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
