use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ApiError, ErrorCode};
use crate::cascade::{
    amplification_ratio, AmplificationReport, EffortLedger, IterationReport, PrecisionAudit,
    ThresholdPair,
};
use crate::pool::{ItemState, PoolStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub category: String,
    /// Completed iterations.
    pub iteration: u32,
    pub open_iteration: Option<u32>,
    pub finished: bool,
    pub state_counts: BTreeMap<ItemState, u64>,
    pub thresholds: Vec<ThresholdPair>,
    pub effort: EffortLedger,
    /// `None` until some item has a human label.
    pub amplification: Option<AmplificationReport>,
    pub audits: Vec<PrecisionAudit>,
    pub reports: Vec<IterationReport>,
}

pub fn metrics(pool: &PoolStore, category: &str) -> Result<MetricsReport, ApiError> {
    if pool.category(category).is_none() {
        return Err(ApiError::new(
            ErrorCode::NotFound,
            format!("unknown category {category}"),
        ));
    }
    let run = pool.run(category).cloned().unwrap_or_default();
    let mut state_counts: BTreeMap<ItemState, u64> =
        ItemState::ALL.iter().map(|s| (*s, 0)).collect();
    state_counts.extend(pool.counts(category).0);
    let effort = EffortLedger::from_pool(pool, category);
    Ok(MetricsReport {
        category: category.to_owned(),
        iteration: run.completed_iterations(),
        open_iteration: run.open.as_ref().map(|t| t.iteration),
        finished: run.finished,
        state_counts,
        thresholds: run.reports.iter().map(|r| r.thresholds).collect(),
        effort,
        amplification: amplification_ratio(&effort).ok(),
        audits: run.audits,
        reports: run.reports,
    })
}
