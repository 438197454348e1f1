//! The labeling cascade: confidence thresholds, iteration planning, the
//! iteration engine, and precision/amplification accounting.

mod config;
mod engine;
mod plan;
mod report;
mod thresholds;

pub use config::{CascadeConfig, CascadeFile, ScorerSection};
pub use engine::{CascadeEngine, ExpertLabeler, HumanLabeler, IterationOutcome, IterationTicket};
pub use plan::{assemble_training_set, plan_iteration, Plan, PoolCounts, SamplingPlan};
pub use report::{
    amplification_ratio, audit_from_counts, precision_audit, wilson_interval, AmplificationReport,
    EffortLedger, IterationReport, PrecisionAudit, Z_95,
};
pub use thresholds::{
    apply_thresholds, compute_lower_threshold, compute_upper_threshold, loss_allowance, Partition,
    ThresholdPair,
};

use crate::pool::PoolError;
use crate::scorer::ScorerError;
use crate::types::ItemId;

#[derive(Debug, thiserror::Error)]
pub enum CascadeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("an iteration is already open")]
    IterationOpen,
    #[error("no iteration is open")]
    NoOpenIteration,
    #[error("the cascade has finished")]
    Finished,
    #[error("{0} targets are still being labeled")]
    StillLabeling(usize),
    #[error("sampled item {0} has no features of the category dimension")]
    MissingFeatures(ItemId),
    #[error("amplification ratio undefined: no human-labeled items")]
    UndefinedRatio,
    #[error("labeling failed: {0}")]
    Labeling(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}
