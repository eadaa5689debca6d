use thiserror::Error;

use crate::geometry::ActionId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid court layout: {0}")]
    Layout(String),

    #[error("state pruning removed every serve state")]
    NoServeStates,

    #[error("state census: {0}")]
    Census(String),

    #[error("invalid generator parameters: {0}")]
    Generator(String),

    #[error("shot generation requires a transient state")]
    AbsorbingState,

    #[error("calibration failed: best L1 distance {distance:.4} exceeds 0.10")]
    CalibrationBudget { distance: f64 },

    #[error("invalid outcome targets: {0}")]
    Targets(String),

    #[error("fit failed for region {region:?}: {reason}")]
    Fit { region: ActionId, reason: String },

    #[error("no intention distribution for state {0}")]
    MissingIntention(usize),

    #[error("fault rule applies only to serve states")]
    NotServeState,

    #[error("unknown scenario class `{0}`")]
    UnknownClass(String),

    #[error("no transition model for epsilon {0}")]
    MissingModel(u32),

    #[error("epsilon {value} outside 1..={max}")]
    Epsilon { value: u32, max: u32 },

    #[error("improper system: absorption unreachable from {} state(s), first {:?}", .states.len(), .states.first())]
    Improper { states: Vec<usize> },

    #[error("improper policies possible: {} (state, action) rows never approach absorption", .rows.len())]
    ImproperRows { rows: Vec<(usize, ActionId)> },

    #[error("trajectory from state {start} not absorbed after {steps} steps")]
    NonAbsorbing { start: usize, steps: u64 },

    #[error("missing start weight for state {0}")]
    MissingWeight(usize),

    #[error("model artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
