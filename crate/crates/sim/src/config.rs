use labelamp::cascade::CascadeConfig;
use labelamp::svc::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRange {
    pub min: f64,
    pub max: f64,
}

/// Skill curve `s = s0 + k·ln(1 + n_train/n0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillCurve {
    pub s0: f64,
    pub k: f64,
    pub n0: f64,
}

impl SkillCurve {
    pub fn skill(&self, n_train: usize) -> f64 {
        self.s0 + self.k * (1.0 + n_train as f64 / self.n0).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoldSizes {
    pub tutorial: usize,
    pub online: usize,
    pub hidden: usize,
    /// Fraction of yes-truth items in every gold pool.
    pub yes_fraction: f64,
}

impl Default for GoldSizes {
    fn default() -> Self {
        Self {
            tutorial: 300,
            online: 400,
            hidden: 400,
            yes_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub category: String,
    pub pool_size: usize,
    pub prevalence: f64,
    pub difficulty: BetaParams,
    pub worker_count: usize,
    pub flip_prob: RateRange,
    pub spammer_fraction: f64,
    pub skill: SkillCurve,
    pub noise_sigma: f64,
    /// Candidate models the oracle offers per iteration.
    pub candidates: usize,
    /// Chance that a worker takes a HIT and never submits it.
    pub abandon_prob: f64,
    /// Simulated seconds per worker action.
    pub seconds_per_action: i64,
    pub seed: u64,
    pub gold: GoldSizes,
    pub cascade: CascadeConfig,
    pub service: ServiceConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            category: "synthetic".into(),
            pool_size: 20_000,
            prevalence: 0.3,
            difficulty: BetaParams {
                alpha: 2.0,
                beta: 5.0,
            },
            worker_count: 30,
            flip_prob: RateRange {
                min: 0.05,
                max: 0.05,
            },
            spammer_fraction: 0.1,
            skill: SkillCurve {
                s0: 3.0,
                k: 1.0,
                n0: 500.0,
            },
            noise_sigma: 1.0,
            candidates: 1,
            abandon_prob: 0.01,
            seconds_per_action: 60,
            seed: 0,
            gold: GoldSizes::default(),
            cascade: CascadeConfig {
                batch_size: 4_000,
                test_size: 1_000,
                val_size: 500,
                exhaustive_limit: 4_000,
                ..CascadeConfig::default()
            },
            service: ServiceConfig::default(),
        }
    }
}

fn rate(name: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        rate("prevalence", self.prevalence)?;
        rate("spammer_fraction", self.spammer_fraction)?;
        rate("abandon_prob", self.abandon_prob)?;
        rate("flip_prob.min", self.flip_prob.min)?;
        rate("flip_prob.max", self.flip_prob.max)?;
        rate("gold.yes_fraction", self.gold.yes_fraction)?;
        if self.flip_prob.min > self.flip_prob.max {
            return Err(SimError::Config("flip_prob.min exceeds flip_prob.max".into()));
        }
        if !(self.difficulty.alpha > 0.0 && self.difficulty.beta > 0.0) {
            return Err(SimError::Config("difficulty parameters must be positive".into()));
        }
        if self.pool_size == 0 || self.worker_count == 0 || self.candidates == 0 {
            return Err(SimError::Config(
                "pool_size, worker_count and candidates must be positive".into(),
            ));
        }
        if self.skill.n0 <= 0.0 || self.noise_sigma < 0.0 {
            return Err(SimError::Config("skill.n0 must be positive, noise_sigma non-negative".into()));
        }
        if self.seconds_per_action <= 0 {
            return Err(SimError::Config("seconds_per_action must be positive".into()));
        }
        self.cascade.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.service
            .consensus
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}
