//! Classifier contract, the reference logistic scorer, accuracy metrics and
//! model selection.

mod logistic;
mod metrics;
mod select;

pub use logistic::{
    log_loss_and_gradient, sigmoid, stable_learning_rate, train_reference, train_reference_traced,
    LogisticModel, ReferenceFactory, TrainConfig, TrainMeta, MODEL_FORMAT_VERSION,
};
pub use metrics::{balanced_accuracy, uniform_accuracy, ModelMetrics, ACCURACY_CUTOFF};
pub use select::{select_model, Selection};

use serde::{Deserialize, Serialize};

use crate::types::{ItemId, Label};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub item_id: ItemId,
    pub features: Vec<f64>,
    pub label: Label,
}

/// A trained binary classifier. Scores are in `[0, 1]`; scoring is pure, so
/// implementations are shared freely across threads.
pub trait Scorer: Send + Sync {
    fn feature_dim(&self) -> usize;

    fn score(&self, features: &[f64]) -> Result<f64, ScorerError>;

    fn score_batch(&self, rows: &[&[f64]]) -> Result<Vec<f64>, ScorerError> {
        rows.iter().map(|row| self.score(row)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }

    fn score(&self, features: &[f64]) -> Result<f64, ScorerError> {
        (**self).score(features)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }

    fn score(&self, features: &[f64]) -> Result<f64, ScorerError> {
        (**self).score(features)
    }
}

/// Produces candidate models for one cascade iteration.
pub trait ScorerFactory {
    type Model: Scorer;

    fn train_candidates(
        &mut self,
        train: &[LabeledExample],
        iteration: u32,
    ) -> Result<Vec<Self::Model>, ScorerError>;
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), ScorerError> {
    if expected == got {
        Ok(())
    } else {
        Err(ScorerError::InvalidArgument(format!(
            "feature dimension mismatch: expected {expected}, got {got}"
        )))
    }
}
