use thiserror::Error;

use crate::domain::TaskId;

/// Errors surfaced by the domain, world, learner, risk, and metric layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("task {0} does not occur in the stream")]
    TaskNotInStream(TaskId),

    #[error("task-agnostic item at position {position} while strict mode is on")]
    TaskAgnosticStream { position: usize },

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Bayes risk unknown for {0}")]
    UnknownBayesRisk(String),

    #[error("missing error estimate for prefix {i}, task {j}")]
    MissingCell { i: usize, j: usize },

    #[error("need at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("task {0} never exits the stream")]
    TaskNeverExits(TaskId),

    #[error("empty grid")]
    EmptyGrid,

    #[error("empty stream schedule")]
    EmptySchedule,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
