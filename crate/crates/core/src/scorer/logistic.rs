//! Reference scorer: L2-regularised logistic regression trained by full-batch
//! gradient descent from zero weights.

use serde::{Deserialize, Serialize};

use super::{check_dim, LabeledExample, Scorer, ScorerError, ScorerFactory};
use crate::types::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    #[serde(default)]
    pub l2_lambda: f64,
    /// Unused by the deterministic reference trainer; kept so stochastic
    /// trainers share the config.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            l2_lambda: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ScorerError::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(ScorerError::InvalidArgument(
                "l2_lambda must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub examples_used: usize,
    pub epochs: u32,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelBlob {
    version: u32,
    #[serde(flatten)]
    model: LogisticModel,
}

impl LogisticModel {
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            train_meta: TrainMeta {
                examples_used: 0,
                epochs: 0,
                final_loss: f64::NAN,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelBlob {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let blob: ModelBlob = serde_json::from_str(text)
            .map_err(|e| ScorerError::InvalidArgument(format!("model blob: {e}")))?;
        if blob.version != MODEL_FORMAT_VERSION {
            return Err(ScorerError::InvalidArgument(format!(
                "unsupported model format version {}",
                blob.version
            )));
        }
        check_dim(blob.model.feature_dim, blob.model.weights.len())?;
        Ok(blob.model)
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

impl Scorer for LogisticModel {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn score(&self, features: &[f64]) -> Result<f64, ScorerError> {
        check_dim(self.feature_dim, features.len())?;
        Ok(sigmoid(self.logit(features)))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Objective and gradient at `params = [w_1..w_d, b]`:
/// mean log-loss + (l2/2)·‖w‖². The bias is not regularised.
pub fn log_loss_and_gradient(
    params: &[f64],
    data: &[LabeledExample],
    l2_lambda: f64,
) -> (f64, Vec<f64>) {
    let dim = params.len() - 1;
    let (weights, bias) = params.split_at(dim);
    let bias = bias[0];
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim + 1];
    for ex in data {
        let z = weights.iter().zip(&ex.features).map(|(w, v)| w * v).sum::<f64>() + bias;
        let y = if ex.label.is_positive() { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, v) in grad.iter_mut().zip(&ex.features) {
            *g += residual * v;
        }
        grad[dim] += residual;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    loss += 0.5 * l2_lambda * sq;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2_lambda * w;
    }
    (loss, grad)
}

/// Step size under which full-batch descent cannot increase the objective:
/// 1 / (4·max‖x̃‖² + λ), where x̃ is the feature vector with the constant bias
/// input appended.
pub fn stable_learning_rate(data: &[LabeledExample], l2_lambda: f64) -> f64 {
    let max_sq = data
        .iter()
        .map(|ex| ex.features.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .fold(0.0, f64::max);
    1.0 / (4.0 * max_sq + l2_lambda)
}

fn validate_training_set(train: &[LabeledExample]) -> Result<usize, ScorerError> {
    let first = train
        .first()
        .ok_or_else(|| ScorerError::DegenerateData("empty training set".into()))?;
    let dim = first.features.len();
    for ex in train {
        check_dim(dim, ex.features.len())?;
    }
    let positives = train.iter().filter(|ex| ex.label == Label::Positive).count();
    if positives == 0 || positives == train.len() {
        return Err(ScorerError::DegenerateData(
            "training set must contain both classes".into(),
        ));
    }
    Ok(dim)
}

pub fn train_reference(
    train: &[LabeledExample],
    config: &TrainConfig,
) -> Result<LogisticModel, ScorerError> {
    train_reference_traced(train, config).map(|(model, _)| model)
}

/// Trains and also returns the objective before the first step and after each
/// epoch (`epochs + 1` values).
pub fn train_reference_traced(
    train: &[LabeledExample],
    config: &TrainConfig,
) -> Result<(LogisticModel, Vec<f64>), ScorerError> {
    config.validate()?;
    let dim = validate_training_set(train)?;
    let mut params = vec![0.0; dim + 1];
    let mut trace = Vec::with_capacity(config.epochs as usize + 1);
    let (mut loss, mut grad) = log_loss_and_gradient(&params, train, config.l2_lambda);
    trace.push(loss);
    for _ in 0..config.epochs {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        (loss, grad) = log_loss_and_gradient(&params, train, config.l2_lambda);
        trace.push(loss);
    }
    let bias = params.pop().expect("bias present");
    Ok((
        LogisticModel {
            feature_dim: dim,
            weights: params,
            bias,
            train_meta: TrainMeta {
                examples_used: train.len(),
                epochs: config.epochs,
                final_loss: loss,
            },
        },
        trace,
    ))
}

/// Trains one reference model per L2 strength. The learning rate is capped at
/// the stable step for the given data.
#[derive(Debug, Clone)]
pub struct ReferenceFactory {
    pub config: TrainConfig,
    pub l2_grid: Vec<f64>,
}

impl ReferenceFactory {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            l2_grid: vec![config.l2_lambda],
            config,
        }
    }

    pub fn with_l2_grid(mut self, grid: Vec<f64>) -> Self {
        self.l2_grid = grid;
        self
    }
}

impl ScorerFactory for ReferenceFactory {
    type Model = LogisticModel;

    fn train_candidates(
        &mut self,
        train: &[LabeledExample],
        _iteration: u32,
    ) -> Result<Vec<LogisticModel>, ScorerError> {
        self.l2_grid
            .iter()
            .map(|&l2| {
                let lr = self
                    .config
                    .learning_rate
                    .min(stable_learning_rate(train, l2));
                let cfg = TrainConfig {
                    learning_rate: lr,
                    l2_lambda: l2,
                    ..self.config
                };
                train_reference(train, &cfg)
            })
            .collect()
    }
}
