use labelamp::scorer::{sigmoid, LabeledExample, Scorer, ScorerError, ScorerFactory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SkillCurve;

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scores synthetic items from their hidden signal:
/// `sigmoid(skill·signal + sigma·noise)`, where the noise is a fixed normal
/// draw per (model, item).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScorer {
    pub skill: f64,
    pub sigma: f64,
    pub noise_seed: u64,
}

impl OracleScorer {
    fn noise(&self, key: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.noise_seed, key.to_bits()));
        StandardNormal.sample(&mut rng)
    }
}

impl Scorer for OracleScorer {
    fn feature_dim(&self) -> usize {
        2
    }

    fn score(&self, features: &[f64]) -> Result<f64, ScorerError> {
        let [signal, key] = features else {
            return Err(ScorerError::InvalidArgument(format!(
                "oracle expects 2 features, got {}",
                features.len()
            )));
        };
        Ok(sigmoid(self.skill * signal + self.sigma * self.noise(*key)))
    }
}

/// "Trains" oracle scorers whose skill follows the curve in the size of the
/// training set.
#[derive(Debug, Clone)]
pub struct OracleFactory {
    pub curve: SkillCurve,
    pub sigma: f64,
    pub seed: u64,
    pub candidates: usize,
}

impl ScorerFactory for OracleFactory {
    type Model = OracleScorer;

    fn train_candidates(
        &mut self,
        train: &[LabeledExample],
        iteration: u32,
    ) -> Result<Vec<OracleScorer>, ScorerError> {
        let positives = train.iter().filter(|e| e.label.is_positive()).count();
        if positives == 0 || positives == train.len() {
            return Err(ScorerError::DegenerateData(
                "training set must contain both classes".into(),
            ));
        }
        let skill = self.curve.skill(train.len());
        Ok((0..self.candidates)
            .map(|c| OracleScorer {
                skill,
                sigma: self.sigma,
                noise_seed: mix(mix(self.seed, u64::from(iteration)), c as u64),
            })
            .collect())
    }
}
