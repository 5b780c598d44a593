use thiserror::Error;

use crate::inner::InnerResult;
use crate::outer::OuterTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point lies outside the domain of the composite term")]
    OutsideDomain,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inner solver exhausted its budget of {budget} iterations (best gap {gap:.3e})", gap = best.gap)]
    BudgetExceeded { budget: usize, best: Box<InnerResult> },

    /// The outer loop stopped early; `partial` holds every completed iteration.
    #[error("outer loop aborted at k = {k}: {source}")]
    OuterAborted {
        k: usize,
        partial: Box<OuterTrace>,
        #[source]
        source: Box<Error>,
    },

    #[error("tolerance schedule exhausted at k = {0}")]
    ScheduleExhausted(usize),

    #[error("reference solution failed: {0}")]
    Reference(String),

    #[error("degenerate constants: {0}")]
    Degenerate(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
