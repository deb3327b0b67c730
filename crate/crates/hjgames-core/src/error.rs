//! Error taxonomy shared by all solver stages.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::synthesis::Trajectory;

/// Library-wide error type.
///
/// `Config` covers bad grids, schemes, and incompatible solve requests;
/// `Domain` covers queries outside the grid or control boxes; `Evaluation`
/// covers non-finite user-evaluator output; the remaining variants are
/// runtime failures of a solve or rollout.
#[derive(Debug, Error)]
pub enum HjError<T: Scalar> {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("numerical blow-up at t={time}: {detail}")]
    Blowup { time: T, detail: String },

    #[error("infeasible start: {0}")]
    Infeasible(String),

    #[error("rollout escaped the grid at t={time}")]
    Escape {
        time: T,
        /// Trajectory accumulated up to the escape.
        partial: Box<Trajectory<T>>,
    },
}

pub type Result<V, T> = std::result::Result<V, HjError<T>>;

impl<T: Scalar> HjError<T> {
    pub fn config(msg: impl Into<String>) -> Self {
        HjError::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        HjError::Domain(msg.into())
    }

    pub fn evaluation(msg: impl Into<String>) -> Self {
        HjError::Evaluation(msg.into())
    }
}
