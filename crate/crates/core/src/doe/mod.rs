//! Full-factorial experiments on a fitted ensemble. The uncontrollable
//! factors are pinned at an operating point, every combination of
//! controllable-factor levels is scored by every member, and per-level main
//! effects, member envelopes and recommended settings are derived from the
//! resulting incidence matrix.

mod effects;
mod plan;

use thiserror::Error;

pub use effects::{
    envelope, envelope_csv, factor_effects, interaction_effects, recommend_bounds, EffectEnvelope,
    EffectTable, FactorEnvelope, FactorRecommendation, InteractionTable, Recommendation,
};
pub use plan::{
    assemble_row, build_plan, run_doe, simulate_plan, DoeResult, FactorialPlan, IncidenceMatrix,
    LevelSpec, OperatingPoint, PlanFactor, Response, Warning,
};

#[derive(Debug, Error)]
pub enum DoeError {
    #[error("schema has no controllable factors")]
    NoControllable,
    #[error("factor {factor:?} needs at least 2 levels, got {count}")]
    LevelCount { factor: String, count: usize },
    #[error("unknown factor {0:?}")]
    UnknownFactor(String),
    #[error("missing value for factor {0:?}")]
    MissingFactor(String),
    #[error("factor {0:?} is controllable and cannot be part of the operating point")]
    Controllable(String),
    #[error("factor {0:?} is not controllable")]
    NotControllable(String),
    #[error("factor {0:?} is not in the plan")]
    NotInPlan(String),
    #[error("value {value} of factor {factor:?} is not finite")]
    NotFinite { factor: String, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
}

pub type Result<T> = std::result::Result<T, DoeError>;
