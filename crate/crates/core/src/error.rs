use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The least-squares system does not have full column rank.
    #[error("rank-deficient least-squares system ({rows}x{cols}): {reason}")]
    RankDeficient {
        rows: usize,
        cols: usize,
        reason: String,
    },

    #[error("no path estimates supplied")]
    EmptyEstimates,

    #[error("cannot place {count} paths with the requested separations")]
    InfeasibleSeparation { count: usize },

    #[error("spatial frequency {nu} lies outside the visible region for d/lambda = {d_over_lambda}")]
    NotPhysical { nu: f64, d_over_lambda: f64 },
}
