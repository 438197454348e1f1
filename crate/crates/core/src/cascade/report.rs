//! Per-iteration reports, amplification accounting and precision audits.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CascadeError, ThresholdPair};
use crate::pool::PoolStore;
use crate::scorer::ModelMetrics;
use crate::types::{ItemId, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub exhaustive: bool,
    pub sampled: usize,
    pub human_positive: usize,
    pub human_negative: usize,
    /// Sampled items humans did not resolve; they return to the unlabeled pool.
    pub unresolved: usize,
    pub auto_positive: usize,
    pub auto_negative: usize,
    pub carried_forward: usize,
    pub training_size: usize,
    pub test_positives: usize,
    pub thresholds: ThresholdPair,
    pub model_metrics: Option<ModelMetrics>,
    pub unlabeled_before: usize,
    pub unlabeled_after: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Last iteration of the run.
    pub terminal: bool,
}

impl IterationReport {
    /// unlabeled_before = unlabeled_after + auto-resolved + human-resolved.
    pub fn reconciles(&self) -> bool {
        self.unlabeled_before
            == self.unlabeled_after
                + self.auto_positive
                + self.auto_negative
                + self.human_positive
                + self.human_negative
            && self.sampled == self.human_positive + self.human_negative + self.unresolved
    }
}

/// Counts behind the amplification ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EffortLedger {
    pub auto_resolved: u64,
    pub human_resolved: u64,
    /// Distinct target items with at least one human answer. Gold items never
    /// enter the pool, so they are excluded by construction.
    pub human_labeled_items: u64,
}

impl EffortLedger {
    pub fn from_pool(pool: &PoolStore, category: &str) -> Self {
        let mut ledger = Self::default();
        for item in pool.items(category) {
            match item.state.resolution() {
                Some((_, crate::pool::Provenance::Auto)) => ledger.auto_resolved += 1,
                Some(_) => ledger.human_resolved += 1,
                None => {}
            }
            if !item.votes.is_empty() {
                ledger.human_labeled_items += 1;
            }
        }
        ledger
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub total_resolved: u64,
    pub human_labeled_items: u64,
    pub ratio: f64,
}

pub fn amplification_ratio(ledger: &EffortLedger) -> Result<AmplificationReport, CascadeError> {
    if ledger.human_labeled_items == 0 {
        return Err(CascadeError::UndefinedRatio);
    }
    let total = ledger.auto_resolved + ledger.human_resolved;
    Ok(AmplificationReport {
        total_resolved: total,
        human_labeled_items: ledger.human_labeled_items,
        ratio: total as f64 / ledger.human_labeled_items as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAudit {
    pub sample_size: usize,
    pub confirmed_positive: usize,
    pub precision: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Samples `sample_n` items of the positive set uniformly and checks them
/// against expert labels.
pub fn precision_audit(
    positive_set: &[ItemId],
    sample_n: usize,
    expert_labels: &BTreeMap<ItemId, Label>,
    seed: u64,
) -> Result<PrecisionAudit, CascadeError> {
    if sample_n == 0 {
        return Err(CascadeError::InvalidArgument("empty audit sample".into()));
    }
    if sample_n > positive_set.len() {
        return Err(CascadeError::InvalidArgument(format!(
            "audit sample {sample_n} exceeds positive set of {}",
            positive_set.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut confirmed = 0;
    for idx in rand::seq::index::sample(&mut rng, positive_set.len(), sample_n) {
        let id = &positive_set[idx];
        let label = expert_labels.get(id).ok_or_else(|| {
            CascadeError::InvalidArgument(format!("no expert label for sampled item {id}"))
        })?;
        confirmed += usize::from(label.is_positive());
    }
    Ok(audit_from_counts(confirmed, sample_n))
}

pub fn audit_from_counts(confirmed: usize, sample_n: usize) -> PrecisionAudit {
    let (wilson_low, wilson_high) = wilson_interval(confirmed, sample_n, Z_95);
    PrecisionAudit {
        sample_size: sample_n,
        confirmed_positive: confirmed,
        precision: confirmed as f64 / sample_n as f64,
        wilson_low,
        wilson_high,
    }
}
