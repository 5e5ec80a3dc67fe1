use thiserror::Error;

use crate::fitting::FitStageRecord;
use crate::reject::StageRecord;

/// Errors produced by sample validation, estimation, rejection and fitting.
#[derive(Debug, Error)]
pub enum RcrError {
    #[error("sample is empty")]
    EmptySample,

    #[error("value at index {index} is not finite: {value}")]
    NonFiniteValue { index: usize, value: f64 },

    #[error("weight at index {index} must be positive and finite, got {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("error bar at index {index} must be positive and finite, got {value}")]
    InvalidErrorBar { index: usize, value: f64 },

    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operation needs at least {needed} points, sample has {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("calibration needs at least {needed} trials, got {got}")]
    InsufficientTrials { needed: usize, got: usize },

    #[error("no residual degrees of freedom: n = {n} with {m} model parameters")]
    NoDegreesOfFreedom { n: usize, m: usize },

    #[error("every point was rejected after {} iteration(s)", stage_log.len())]
    AllRejected { stage_log: Vec<StageRecord> },

    #[error("fewer than {min} points remain for an {m}-parameter model")]
    TooFewPointsForModel {
        min: usize,
        m: usize,
        stage_log: Vec<FitStageRecord>,
    },

    #[error("degenerate point tuple: singular system")]
    DegenerateTuple,

    #[error("fit did not converge within {max_iterations} iterations")]
    NonConverged { max_iterations: usize },

    #[error("no nondegenerate parameter solutions could be formed")]
    NoValidTuples,

    #[error("total solution weight is zero")]
    ZeroTotalWeight,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("correction table has no entry for {0}")]
    MissingTableEntry(String),

    #[error("malformed correction table: {0}")]
    TableFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RcrError>;
