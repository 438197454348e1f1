use serde::{Deserialize, Serialize};

use super::CascadeError;
use crate::scorer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    /// Items sampled for human labeling per iteration.
    pub batch_size: usize,
    /// Part of the batch held out to fit thresholds.
    pub test_size: usize,
    /// Part of the batch held out for model selection.
    pub val_size: usize,
    /// Minimum precision of the auto-positive band on the test split.
    pub precision_target: f64,
    /// Fraction of test positives allowed below the auto-negative cut.
    pub loss_budget: f64,
    /// Auto-negatives are disabled when the test split has fewer positives.
    pub min_test_positives: usize,
    /// Once the unlabeled pool is this small, send all of it to humans.
    pub exhaustive_limit: usize,
    /// Iteration number at which labeling becomes exhaustive regardless of size.
    pub max_iterations: u32,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            batch_size: 40_000,
            test_size: 10_000,
            val_size: 5_000,
            precision_target: 0.95,
            loss_budget: 0.01,
            min_test_positives: 10,
            exhaustive_limit: 10_000,
            max_iterations: 30,
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |msg: &str| Err(CascadeError::InvalidArgument(msg.to_owned()));
        if self.test_size + self.val_size >= self.batch_size {
            return bad("test_size + val_size must be smaller than batch_size");
        }
        if self.test_size == 0 || self.val_size == 0 {
            return bad("test_size and val_size must be positive");
        }
        if !(self.precision_target > 0.0 && self.precision_target <= 1.0) {
            return bad("precision_target must be in (0, 1]");
        }
        if !(self.loss_budget >= 0.0 && self.loss_budget < 1.0) {
            return bad("loss_budget must be in [0, 1)");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }

    pub fn train_size(&self) -> usize {
        self.batch_size - self.test_size - self.val_size
    }
}

/// On-disk cascade configuration: the cascade fields at top level plus an
/// optional `[scorer]` table for the reference trainer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CascadeFile {
    #[serde(flatten)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub scorer: ScorerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerSection {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// One reference candidate is trained per L2 strength.
    pub l2_grid: Vec<f64>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            l2_grid: vec![0.0, 1e-3, 1e-2],
        }
    }
}

impl CascadeFile {
    pub fn from_toml(text: &str) -> Result<Self, CascadeError> {
        let file: Self =
            toml::from_str(text).map_err(|e| CascadeError::InvalidArgument(e.to_string()))?;
        file.cascade.validate()?;
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        CascadeConfig::default().validate().unwrap();
        assert_eq!(CascadeConfig::default().train_size(), 25_000);
    }

    #[test]
    fn config_file_defaults_and_overrides() {
        let file = CascadeFile::from_toml("batch_size = 4000\ntest_size = 1000\nval_size = 500\n").unwrap();
        assert_eq!(file.cascade.train_size(), 2500);
        assert_eq!(file.cascade.precision_target, 0.95);
        assert_eq!(file.scorer.l2_grid.len(), 3);
        let file = CascadeFile::from_toml("[scorer]\nepochs = 5\nlearning_rate = 0.1\n").unwrap();
        assert_eq!(file.scorer.train.epochs, 5);
        let file = CascadeFile::from_toml("[scorer]\nepochs = 7\n").unwrap();
        assert_eq!(file.scorer.train.epochs, 7);
        assert_eq!(file.scorer.train.learning_rate, TrainConfig::default().learning_rate);
        assert!(CascadeFile::from_toml("test_size = 40000").is_err());
    }

    #[test]
    fn invalid_configs() {
        let c = CascadeConfig {
            precision_target: 0.0,
            ..CascadeConfig::default()
        };
        assert!(c.validate().is_err());
        let c = CascadeConfig {
            loss_budget: 1.0,
            ..CascadeConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
