use std::collections::BTreeMap;
use std::sync::Arc;

use labelamp::cascade::{
    amplification_ratio, CascadeEngine, EffortLedger, IterationReport, ThresholdPair,
};
use labelamp::pool::{CategoryKind, CategorySpec, IngestOptions, ItemState, PoolStore};
use labelamp::svc::TaskService;
use labelamp::{Answer, ItemId, Label, ManualClock, Timestamp};
use serde::{Deserialize, Serialize};

use crate::crowd::{CrowdStats, SimCrowd};
use crate::oracle::{mix, OracleFactory};
use crate::world::{gen_gold, gen_pool, make_workers};
use crate::{SimConfig, SimError};

/// Simulated wall clock start, 2024-01-01T00:00:00Z.
const START: Timestamp = 1_704_067_200;

/// Direct recount of the threshold guarantees on one iteration's test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    pub iteration: u32,
    pub test_size: usize,
    pub test_positives: usize,
    pub thresholds: ThresholdPair,
    pub above_upper: usize,
    pub positives_above_upper: usize,
    pub positives_below_lower: usize,
    pub loss_allowance: usize,
    pub precision_ok: bool,
    pub recall_ok: bool,
}

impl GuaranteeCheck {
    fn recount(
        iteration: u32,
        scored: &[(f64, Label)],
        thresholds: ThresholdPair,
        precision_target: f64,
        loss_budget: f64,
    ) -> Self {
        let test_positives = scored.iter().filter(|(_, l)| l.is_positive()).count();
        let (above, pos_above) = match thresholds.upper {
            Some(u) => {
                let above: Vec<_> = scored.iter().filter(|(s, _)| *s >= u).collect();
                let pos = above.iter().filter(|(_, l)| l.is_positive()).count();
                (above.len(), pos)
            }
            None => (0, 0),
        };
        let below = thresholds.lower.map_or(0, |l| {
            scored.iter().filter(|(s, t)| t.is_positive() && *s < l).count()
        });
        let allowance = (loss_budget * test_positives as f64 + 1e-9).floor() as usize;
        Self {
            iteration,
            test_size: scored.len(),
            test_positives,
            thresholds,
            above_upper: above,
            positives_above_upper: pos_above,
            positives_below_lower: below,
            loss_allowance: allowance,
            precision_ok: above == 0 || pos_above as f64 >= precision_target * above as f64 - 1e-9,
            recall_ok: below <= allowance,
        }
    }

    pub fn holds(&self) -> bool {
        self.precision_ok && self.recall_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub pool_size: usize,
    pub true_positives: usize,
    /// Items labeled positive, by humans or automatically.
    pub positive_set: usize,
    pub final_precision: Option<f64>,
    pub final_recall: Option<f64>,
    /// Ground-truth positives that ended up auto-negative, over all positives.
    pub auto_rejected_positive_fraction: f64,
    pub effort: EffortLedger,
    pub amplification: Option<f64>,
    pub iterations_used: u32,
    pub terminated_exhaustively: bool,
    pub still_unlabeled: usize,
    pub guarantee_checks: Vec<GuaranteeCheck>,
    pub crowd: CrowdStats,
    pub spammer_acceptance: Option<f64>,
    pub reports: Vec<IterationReport>,
}

impl SimResult {
    pub fn guarantees_hold(&self) -> bool {
        self.guarantee_checks.iter().all(GuaranteeCheck::holds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

#[derive(Debug)]
pub struct SimRun {
    pub result: SimResult,
    pub pool: PoolStore,
    pub truths: BTreeMap<ItemId, Label>,
    /// Per iteration, the test split scored by the selected model.
    pub scored_tests: Vec<(u32, Vec<(f64, Label)>)>,
    pub clock: Arc<ManualClock>,
}

/// Runs the cascade to completion on a freshly generated world.
pub fn run_simulation(config: &SimConfig) -> Result<SimRun, SimError> {
    config.validate()?;
    let seed = config.seed;
    let category = config.category.as_str();
    let clock = Arc::new(ManualClock::new(START));
    let mut pool = PoolStore::new(clock.clone());
    pool.register_category(
        CategorySpec::new(category, CategoryKind::Object)
            .with_definition(format!("Pick the images that show a {category}.")),
    )?;

    let world = gen_pool(config, mix(seed, 1));
    let opts = IngestOptions {
        default_category: Some(category.to_owned()),
        ..IngestOptions::default()
    };
    pool.ingest_rows(world.rows(category), &opts)?;
    let truths = world.truths();

    let gold = gen_gold(config, mix(seed, 2));
    let mut answer_truths: BTreeMap<ItemId, Answer> = truths
        .iter()
        .map(|(id, l)| (id.clone(), Answer::from_bool(l.is_positive())))
        .collect();
    for g in gold.all() {
        answer_truths.insert(g.item_id.clone(), g.truth);
    }

    let mut service_cfg = config.service.clone();
    service_cfg.seed = mix(seed, 3);
    let mut service = TaskService::new(service_cfg)?;
    service.set_gold(&pool, category, gold)?;
    let workers = make_workers(config, mix(seed, 4));
    let mut crowd = SimCrowd::new(
        service,
        workers,
        answer_truths,
        clock.clone(),
        mix(seed, 5),
        config.abandon_prob,
        config.seconds_per_action,
    );
    let mut factory = OracleFactory {
        curve: config.skill,
        sigma: config.noise_sigma,
        seed: mix(seed, 6),
        candidates: config.candidates,
    };
    let mut cascade_cfg = config.cascade.clone();
    cascade_cfg.seed = mix(seed, 7);
    let engine = CascadeEngine::new(category, cascade_cfg.clone())?;

    let mut checks = Vec::new();
    let mut reports = Vec::new();
    let mut scored_tests = Vec::new();
    while !engine.is_finished(&pool) {
        let outcome = engine.run_iteration(&mut pool, &mut factory, &mut crowd)?;
        log::info!(
            "iteration {}: +{} auto-pos, +{} auto-neg, {} unlabeled left",
            outcome.report.iteration,
            outcome.report.auto_positive,
            outcome.report.auto_negative,
            outcome.report.unlabeled_after
        );
        if !outcome.scored_test.is_empty() {
            checks.push(GuaranteeCheck::recount(
                outcome.report.iteration,
                &outcome.scored_test,
                outcome.report.thresholds,
                cascade_cfg.precision_target,
                cascade_cfg.loss_budget,
            ));
        }
        scored_tests.push((outcome.report.iteration, outcome.scored_test));
        reports.push(outcome.report);
    }

    let mut positive_set = 0;
    let mut correct_positive = 0;
    let mut auto_rejected = 0;
    for item in pool.items(category) {
        let truth = truths[&item.id];
        match item.state {
            ItemState::HumanPositive | ItemState::AutoPositive => {
                positive_set += 1;
                correct_positive += usize::from(truth.is_positive());
            }
            ItemState::AutoNegative => auto_rejected += usize::from(truth.is_positive()),
            _ => {}
        }
    }
    let true_positives = world.positives();
    let effort = EffortLedger::from_pool(&pool, category);
    let last = reports.last();
    let stats = crowd.stats;
    let result = SimResult {
        seed,
        pool_size: config.pool_size,
        true_positives,
        positive_set,
        final_precision: (positive_set > 0).then(|| correct_positive as f64 / positive_set as f64),
        final_recall: (true_positives > 0).then(|| correct_positive as f64 / true_positives as f64),
        auto_rejected_positive_fraction: if true_positives > 0 {
            auto_rejected as f64 / true_positives as f64
        } else {
            0.0
        },
        effort,
        amplification: amplification_ratio(&effort).ok().map(|a| a.ratio),
        iterations_used: last.map_or(0, |r| r.iteration),
        terminated_exhaustively: last.is_some_and(|r| r.terminal && r.exhaustive),
        still_unlabeled: pool.counts(category).get(ItemState::Unlabeled) as usize,
        guarantee_checks: checks,
        crowd: stats,
        spammer_acceptance: stats.spammer_acceptance(),
        reports,
    };
    Ok(SimRun {
        result,
        pool,
        truths,
        scored_tests,
        clock,
    })
}
