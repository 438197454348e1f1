//! Confidence thresholds fitted on the labeled test split, and the partition
//! they induce. Equal scores are never split across a cut.

use serde::{Deserialize, Serialize};

use super::{CascadeConfig, CascadeError};
use crate::types::Label;

fn check_scored(scored: &[(f64, Label)]) -> Result<(), CascadeError> {
    if scored.is_empty() {
        return Err(CascadeError::InvalidArgument("empty scored test set".into()));
    }
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(CascadeError::InvalidArgument("NaN score".into()));
    }
    Ok(())
}

/// Smallest observed score `t` such that the items scoring at least `t` are
/// at least `target` positive. `None` if no cut qualifies.
pub fn compute_upper_threshold(
    scored: &[(f64, Label)],
    target: f64,
) -> Result<Option<f64>, CascadeError> {
    check_scored(scored)?;
    let mut sorted: Vec<_> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = None;
    let (mut taken, mut positives) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            taken += 1;
            positives += usize::from(sorted[i].1.is_positive());
            i += 1;
        }
        // precision is not monotone in the cut, so keep scanning
        if positives as f64 / taken as f64 >= target {
            best = Some(score);
        }
    }
    Ok(best)
}

/// floor(budget × positives), robust to the product landing a hair below an
/// integer.
pub fn loss_allowance(positives: usize, budget: f64) -> usize {
    (budget * positives as f64 + 1e-9).floor() as usize
}

/// Largest observed score `t` such that at most floor(budget × P) test
/// positives score strictly below `t`. `None` when the test split has fewer
/// than `min_positives` positives.
pub fn compute_lower_threshold(
    scored: &[(f64, Label)],
    loss_budget: f64,
    min_positives: usize,
) -> Result<Option<f64>, CascadeError> {
    check_scored(scored)?;
    let positives = scored.iter().filter(|(_, l)| l.is_positive()).count();
    if positives < min_positives {
        return Ok(None);
    }
    let allowance = loss_allowance(positives, loss_budget);
    let mut sorted: Vec<_> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = None;
    let mut below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        if below > allowance {
            break;
        }
        best = Some(score);
        while i < sorted.len() && sorted[i].0 == score {
            below += usize::from(sorted[i].1.is_positive());
            i += 1;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdPair {
    /// Items scoring at or above are auto-positive.
    pub upper: Option<f64>,
    /// Items scoring strictly below are auto-negative.
    pub lower: Option<f64>,
}

impl ThresholdPair {
    pub const NONE: ThresholdPair = ThresholdPair {
        upper: None,
        lower: None,
    };

    /// Fits both cuts on a scored test split. A lower cut above the upper one
    /// is clamped down to it.
    pub fn from_scored(scored: &[(f64, Label)], cfg: &CascadeConfig) -> Result<Self, CascadeError> {
        let upper = compute_upper_threshold(scored, cfg.precision_target)?;
        let mut lower = compute_lower_threshold(scored, cfg.loss_budget, cfg.min_test_positives)?;
        if let (Some(u), Some(l)) = (upper, lower) {
            if l > u {
                lower = Some(u);
            }
        }
        Ok(Self { upper, lower })
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.upper, self.lower), (Some(u), Some(l)) if l > u)
    }

    pub fn classify(&self, score: f64) -> Option<Label> {
        if self.upper.is_some_and(|u| score >= u) {
            Some(Label::Positive)
        } else if self.lower.is_some_and(|l| score < l) {
            Some(Label::Negative)
        } else {
            None
        }
    }

    pub fn is_ambiguous(&self, score: f64) -> bool {
        self.classify(score).is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<K> {
    pub auto_positive: Vec<K>,
    pub auto_negative: Vec<K>,
    pub ambiguous: Vec<K>,
}

impl<K> Default for Partition<K> {
    fn default() -> Self {
        Self {
            auto_positive: Vec::new(),
            auto_negative: Vec::new(),
            ambiguous: Vec::new(),
        }
    }
}

impl<K> Partition<K> {
    pub fn len(&self) -> usize {
        self.auto_positive.len() + self.auto_negative.len() + self.ambiguous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits scored keys into auto-positive, auto-negative and ambiguous,
/// preserving input order within each part.
pub fn apply_thresholds<K, I>(scores: I, pair: &ThresholdPair) -> Result<Partition<K>, CascadeError>
where
    I: IntoIterator<Item = (K, f64)>,
{
    if pair.is_crossed() {
        return Err(CascadeError::InvalidArgument(format!(
            "crossed thresholds: lower {:?} > upper {:?}",
            pair.lower, pair.upper
        )));
    }
    let mut part = Partition::default();
    for (key, score) in scores {
        match pair.classify(score) {
            Some(Label::Positive) => part.auto_positive.push(key),
            Some(Label::Negative) => part.auto_negative.push(key),
            None => part.ambiguous.push(key),
        }
    }
    Ok(part)
}
