use std::cmp::Ordering;

use super::metrics::{balanced_accuracy, uniform_accuracy, ModelMetrics, ACCURACY_CUTOFF};
use super::{LabeledExample, Scorer, ScorerError};
use crate::cascade::{CascadeConfig, ThresholdPair};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub metrics: ModelMetrics,
    /// Metrics of every candidate, in candidate order.
    pub candidates: Vec<ModelMetrics>,
}

fn score_all<M: Scorer>(model: &M, set: &[LabeledExample]) -> Result<(Vec<f64>, Vec<Label>), ScorerError> {
    let mut scores = Vec::with_capacity(set.len());
    let mut truths = Vec::with_capacity(set.len());
    for ex in set {
        scores.push(model.score(&ex.features)?);
        truths.push(ex.label);
    }
    Ok((scores, truths))
}

fn evaluate<M: Scorer>(
    model: &M,
    val: &[LabeledExample],
    test: &[LabeledExample],
    cfg: &CascadeConfig,
) -> Result<ModelMetrics, ScorerError> {
    let (test_scores, test_truths) = score_all(model, test)?;
    let scored: Vec<(f64, Label)> = test_scores.iter().copied().zip(test_truths).collect();
    let pair = ThresholdPair::from_scored(&scored, cfg)
        .map_err(|e| ScorerError::InvalidArgument(e.to_string()))?;
    let removal_count = test_scores.iter().filter(|&&s| !pair.is_ambiguous(s)).count();
    let (val_scores, val_truths) = score_all(model, val)?;
    Ok(ModelMetrics {
        uniform_accuracy: uniform_accuracy(&val_scores, &val_truths, ACCURACY_CUTOFF)?,
        balanced_accuracy: balanced_accuracy(&val_scores, &val_truths, ACCURACY_CUTOFF)?,
        removal_count,
    })
}

/// Picks the candidate whose thresholds remove the most test items; ties go
/// to higher validation balanced accuracy, then uniform accuracy, then the
/// lowest index.
pub fn select_model<M: Scorer>(
    candidates: &[M],
    val: &[LabeledExample],
    test: &[LabeledExample],
    cfg: &CascadeConfig,
) -> Result<Selection, ScorerError> {
    if candidates.is_empty() {
        return Err(ScorerError::InvalidArgument("no candidate models".into()));
    }
    if val.is_empty() || test.is_empty() {
        return Err(ScorerError::InvalidArgument(
            "validation and test sets must be nonempty".into(),
        ));
    }
    let metrics = candidates
        .iter()
        .map(|m| evaluate(m, val, test, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let better = |a: &ModelMetrics, b: &ModelMetrics| -> Ordering {
        a.removal_count
            .cmp(&b.removal_count)
            .then(a.balanced_accuracy.total_cmp(&b.balanced_accuracy))
            .then(a.uniform_accuracy.total_cmp(&b.uniform_accuracy))
    };
    let mut best = 0;
    for i in 1..metrics.len() {
        if better(&metrics[i], &metrics[best]) == Ordering::Greater {
            best = i;
        }
    }
    Ok(Selection {
        index: best,
        metrics: metrics[best],
        candidates: metrics,
    })
}
