//! Error type shared across the crate.
//!
//! Every fallible operation returns [`CostError`]. The variants are ordered
//! roughly by "how early the problem can be detected": configuration and
//! argument errors are caller mistakes, the remaining variants are runtime
//! failures of the numerics, the data, or the simulation harness.

use thiserror::Error;

/// Errors produced by model construction, fitting, the test engine, the
/// simulation harness, and the I/O layer.
#[derive(Debug, Error)]
pub enum CostError {
    /// A configuration is internally inconsistent: bad family/dimension
    /// combination, a direction vector of the wrong length, an empty
    /// simulation grid, a malformed simulation config file, ...
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument violates a documented precondition: dimension mismatch,
    /// out-of-range value, oversized brute-force input, ...
    #[error("argument error: {0}")]
    Argument(String),

    /// Fewer observations than parameters somewhere a least-squares fit is
    /// required (including subsamples produced by the split).
    #[error("underdetermined problem: {0}")]
    Underdetermined(String),

    /// A numeric computation produced no usable result: non-finite loss at
    /// the fit's initial point, a damped normal-equations solve that failed
    /// even at the damping ceiling, a covariance factorization failure, ...
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The conditional standard deviation in the test's denominator fell
    /// below 1e-12, so the studentized ratio is numerically meaningless.
    #[error("degenerate conditional variance: {0}")]
    DegenerateVariance(String),

    /// The gradient Gram matrix stayed numerically singular after the full
    /// ridge escalation ladder.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// Malformed input data: non-numeric cell, missing value, ragged row,
    /// unknown column. The message always names the offending location.
    #[error("data error: {0}")]
    Data(String),

    /// Underlying file-system failure.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Systematic breakage in a simulation run: more than 20% of the
    /// replications failed, so the aggregate rates would be misleading.
    #[error("harness error: {0}")]
    Harness(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CostError>;
