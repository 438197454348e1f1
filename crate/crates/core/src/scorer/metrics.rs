use serde::{Deserialize, Serialize};

use super::ScorerError;
use crate::types::Label;

/// Cutoff at which a score counts as a positive prediction for accuracy.
pub const ACCURACY_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub uniform_accuracy: f64,
    pub balanced_accuracy: f64,
    /// Test items falling outside the ambiguous band.
    pub removal_count: usize,
}

fn check_inputs(scores: &[f64], truths: &[Label]) -> Result<(), ScorerError> {
    if scores.len() != truths.len() {
        return Err(ScorerError::InvalidArgument(format!(
            "{} scores for {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if scores.is_empty() {
        return Err(ScorerError::InvalidArgument("empty evaluation set".into()));
    }
    Ok(())
}

/// Every item weighted equally.
pub fn uniform_accuracy(scores: &[f64], truths: &[Label], cutoff: f64) -> Result<f64, ScorerError> {
    check_inputs(scores, truths)?;
    let correct = scores
        .iter()
        .zip(truths)
        .filter(|(s, t)| (**s >= cutoff) == t.is_positive())
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Positive and negative sets carry equal total weight:
/// (true-positive rate + true-negative rate) / 2.
pub fn balanced_accuracy(scores: &[f64], truths: &[Label], cutoff: f64) -> Result<f64, ScorerError> {
    check_inputs(scores, truths)?;
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, t) in scores.iter().zip(truths) {
        if t.is_positive() {
            pos += 1;
            tp += usize::from(s >= cutoff);
        } else {
            neg += 1;
            tn += usize::from(s < cutoff);
        }
    }
    if pos == 0 || neg == 0 {
        return Err(ScorerError::DegenerateData(
            "balanced accuracy needs both classes".into(),
        ));
    }
    Ok(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}
