use thiserror::Error;

use crate::path::PathResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("impulse response is empty")]
    Empty,

    #[error("impulse response has even length {0}; only square Hankel maps (odd length) are supported")]
    EvenLength(usize),

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `W` is not an admissible free part of a nuclear-norm subgradient.
    #[error("subgradient membership violated: {0}")]
    Membership(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    /// The gridding loop stopped early. `partial` holds every grid point
    /// completed before the failure.
    #[error("path aborted at lambda = {lambda}: {reason}")]
    PathAborted {
        lambda: f64,
        reason: String,
        partial: Box<PathResult>,
    },
}
