//! The iteration engine. Each iteration is split into `begin` (plan and
//! sample, journaled as a ticket) and `finish` (train, select, threshold,
//! auto-label), with human labeling in between.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{assemble_training_set, plan_iteration, Plan, PoolCounts};
use super::{apply_thresholds, CascadeConfig, CascadeError, IterationReport, ThresholdPair};
use crate::pool::{ItemState, PoolStore, Provenance, Vote};
use crate::scorer::{select_model, LabeledExample, Scorer, ScorerError, ScorerFactory};
use crate::types::{Answer, HitId, ItemId, Label, WorkerId};

/// Items sent to humans in one iteration, fixed when the iteration begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTicket {
    pub iteration: u32,
    pub exhaustive: bool,
    pub train: Vec<ItemId>,
    pub test: Vec<ItemId>,
    pub val: Vec<ItemId>,
    /// Human-labeled items from earlier iterations added to training.
    pub carried_in: Vec<ItemId>,
    pub unlabeled_before: usize,
}

impl IterationTicket {
    pub fn targets(&self) -> impl Iterator<Item = &ItemId> {
        self.test.iter().chain(&self.val).chain(&self.train)
    }

    pub fn target_count(&self) -> usize {
        self.test.len() + self.val.len() + self.train.len()
    }
}

/// Supplies human labels for a ticket. On return every target must be
/// `HumanPositive`, `HumanNegative`, or back in `Unlabeled` (unresolved).
pub trait HumanLabeler {
    fn label(
        &mut self,
        pool: &mut PoolStore,
        category: &str,
        ticket: &IterationTicket,
    ) -> Result<(), CascadeError>;
}

/// Labels targets straight from a table of known labels, as one expert
/// worker. Targets missing from the table stay unresolved.
#[derive(Debug, Clone)]
pub struct ExpertLabeler {
    pub labels: BTreeMap<ItemId, Label>,
    pub worker_id: WorkerId,
}

impl ExpertLabeler {
    pub fn new(labels: BTreeMap<ItemId, Label>) -> Self {
        Self {
            labels,
            worker_id: WorkerId::from("expert"),
        }
    }
}

impl Default for ExpertLabeler {
    fn default() -> Self {
        Self::new(BTreeMap::new())
    }
}

impl HumanLabeler for ExpertLabeler {
    fn label(
        &mut self,
        pool: &mut PoolStore,
        _category: &str,
        ticket: &IterationTicket,
    ) -> Result<(), CascadeError> {
        let hit = HitId::new(format!("expert-{}", ticket.iteration));
        for id in ticket.targets() {
            let Some(&label) = self.labels.get(id) else {
                continue;
            };
            if pool.item(id).map(|i| i.state) != Some(ItemState::Unlabeled) {
                continue;
            }
            pool.transition(id, ItemState::InFlight, Provenance::Human, ticket.iteration)?;
            pool.record_vote(
                id,
                Vote {
                    worker_id: self.worker_id.clone(),
                    hit_id: hit.clone(),
                    answer: Answer::from(label),
                },
            )?;
            pool.transition(id, ItemState::human(label), Provenance::Human, ticket.iteration)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub report: IterationReport,
    /// Test split scores under the selected model, empty when no model was used.
    pub scored_test: Vec<(f64, Label)>,
}

fn iteration_seed(seed: u64, iteration: u32) -> u64 {
    // splitmix64 of (seed, iteration)
    let mut z = seed ^ (u64::from(iteration)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct CascadeEngine {
    pub category: String,
    pub config: CascadeConfig,
}

impl CascadeEngine {
    pub fn new(category: impl Into<String>, config: CascadeConfig) -> Result<Self, CascadeError> {
        config.validate()?;
        Ok(Self {
            category: category.into(),
            config,
        })
    }

    pub fn open_ticket<'a>(&self, pool: &'a PoolStore) -> Option<&'a IterationTicket> {
        pool.run(&self.category).and_then(|r| r.open.as_ref())
    }

    pub fn is_finished(&self, pool: &PoolStore) -> bool {
        pool.run(&self.category).is_some_and(|r| r.finished)
    }

    /// Plans the next iteration, samples its targets and journals the ticket.
    pub fn begin_iteration(&self, pool: &mut PoolStore) -> Result<IterationTicket, CascadeError> {
        if pool.category(&self.category).is_none() {
            return Err(CascadeError::Pool(crate::pool::PoolError::UnknownCategory(
                self.category.clone(),
            )));
        }
        let run = pool.run(&self.category).cloned().unwrap_or_default();
        if run.open.is_some() {
            return Err(CascadeError::IterationOpen);
        }
        if run.finished {
            return Err(CascadeError::Finished);
        }
        let iteration = run.completed_iterations() + 1;
        let unlabeled = pool.ids_in_state(&self.category, ItemState::Unlabeled).len();
        let plan = plan_iteration(
            PoolCounts {
                unlabeled,
                iteration,
            },
            &self.config,
        );
        let seed = iteration_seed(self.config.seed, iteration);
        let ticket = match plan {
            Plan::Exhaustive { items } => IterationTicket {
                iteration,
                exhaustive: true,
                train: pool.sample_uniform(&self.category, items, ItemState::Unlabeled, seed)?,
                test: Vec::new(),
                val: Vec::new(),
                carried_in: run.carried.clone(),
                unlabeled_before: unlabeled,
            },
            Plan::Sampling(split) => {
                let mut sample =
                    pool.sample_uniform(&self.category, split.total(), ItemState::Unlabeled, seed)?;
                let train = sample.split_off(split.test + split.val);
                let val = sample.split_off(split.test);
                let test = sample;
                let ticket = IterationTicket {
                    iteration,
                    exhaustive: false,
                    train,
                    test,
                    val,
                    carried_in: run.carried.clone(),
                    unlabeled_before: unlabeled,
                };
                let dim = pool.feature_dim(&self.category);
                for id in ticket.targets() {
                    let ok = pool
                        .item(id)
                        .and_then(|i| i.features.as_ref())
                        .is_some_and(|f| Some(f.len()) == dim);
                    if !ok {
                        return Err(CascadeError::MissingFeatures(id.clone()));
                    }
                }
                ticket
            }
        };
        pool.start_iteration(&self.category, ticket.clone())?;
        Ok(ticket)
    }

    fn examples(&self, pool: &PoolStore, ids: &[ItemId]) -> Vec<LabeledExample> {
        ids.iter()
            .filter_map(|id| {
                let item = pool.item(id)?;
                let (label, source) = item.state.resolution()?;
                if source != Provenance::Human {
                    return None;
                }
                Some(LabeledExample {
                    item_id: id.clone(),
                    features: item.features.clone()?,
                    label,
                })
            })
            .collect()
    }

    /// Trains on the labeled ticket, fits thresholds on its test split and
    /// auto-labels the unlabeled pool.
    pub fn finish_iteration<F: ScorerFactory>(
        &self,
        pool: &mut PoolStore,
        factory: &mut F,
    ) -> Result<IterationOutcome, CascadeError> {
        let ticket = self
            .open_ticket(pool)
            .cloned()
            .ok_or(CascadeError::NoOpenIteration)?;
        let iteration = ticket.iteration;
        let (mut human_positive, mut human_negative, mut unresolved, mut in_flight) = (0, 0, 0, 0);
        for id in ticket.targets() {
            match pool.item(id).map(|i| i.state) {
                Some(ItemState::HumanPositive) => human_positive += 1,
                Some(ItemState::HumanNegative) => human_negative += 1,
                Some(ItemState::InFlight) => in_flight += 1,
                _ => unresolved += 1,
            }
        }
        if in_flight > 0 {
            return Err(CascadeError::StillLabeling(in_flight));
        }
        let mut report = IterationReport {
            iteration,
            exhaustive: ticket.exhaustive,
            sampled: ticket.target_count(),
            human_positive,
            human_negative,
            unresolved,
            auto_positive: 0,
            auto_negative: 0,
            carried_forward: 0,
            training_size: 0,
            test_positives: 0,
            thresholds: ThresholdPair::NONE,
            model_metrics: None,
            unlabeled_before: ticket.unlabeled_before,
            unlabeled_after: 0,
            warnings: Vec::new(),
            terminal: ticket.exhaustive,
        };
        let mut scored_test = Vec::new();
        let mut carried = Vec::new();

        if !ticket.exhaustive {
            let new_train = self.examples(pool, &ticket.train);
            let carried_in = self.examples(pool, &ticket.carried_in);
            let (training, warnings) = assemble_training_set(new_train, carried_in);
            report.warnings.extend(warnings);
            report.training_size = training.len();
            let test = self.examples(pool, &ticket.test);
            let val = self.examples(pool, &ticket.val);
            report.test_positives = test.iter().filter(|e| e.label.is_positive()).count();

            let trained = factory
                .train_candidates(&training, iteration)
                .and_then(|mut candidates| {
                    let selection = select_model(&candidates, &val, &test, &self.config)?;
                    Ok((candidates.swap_remove(selection.index), selection))
                });
            match trained {
                Ok((model, selection)) => {
                    report.model_metrics = Some(selection.metrics);
                    for ex in &test {
                        scored_test.push((model.score(&ex.features)?, ex.label));
                    }
                    let pair = ThresholdPair::from_scored(&scored_test, &self.config)?;
                    report.thresholds = pair;

                    let mut band = BTreeSet::new();
                    for ex in training.iter().chain(&test).chain(&val) {
                        if pair.is_ambiguous(model.score(&ex.features)?) {
                            band.insert(ex.item_id.clone());
                        }
                    }
                    carried = band.into_iter().collect();

                    let (auto_positive, auto_negative) = self.auto_label(pool, &model, &pair, iteration)?;
                    report.auto_positive = auto_positive;
                    report.auto_negative = auto_negative;
                }
                Err(err @ (ScorerError::DegenerateData(_) | ScorerError::InvalidArgument(_))) => {
                    let msg = format!("iteration {iteration} is humans-only: {err}");
                    log::warn!("{msg}");
                    report.warnings.push(msg);
                    let all: BTreeSet<ItemId> = training
                        .iter()
                        .chain(&test)
                        .chain(&val)
                        .map(|e| e.item_id.clone())
                        .collect();
                    carried = all.into_iter().collect();
                }
            }
        }

        report.carried_forward = carried.len();
        report.unlabeled_after = pool.ids_in_state(&self.category, ItemState::Unlabeled).len();
        report.terminal = ticket.exhaustive || report.unlabeled_after == 0;
        debug_assert!(report.reconciles(), "ledger mismatch: {report:?}");
        pool.complete_iteration(&self.category, report.clone(), carried)?;
        Ok(IterationOutcome {
            report,
            scored_test,
        })
    }

    /// Scores every unlabeled item of the category (in parallel) and moves
    /// those outside the ambiguous band to auto states.
    fn auto_label<M: Scorer>(
        &self,
        pool: &mut PoolStore,
        model: &M,
        pair: &ThresholdPair,
        iteration: u32,
    ) -> Result<(usize, usize), CascadeError> {
        let candidates: Vec<(&ItemId, &[f64])> = pool
            .items(&self.category)
            .filter(|i| i.state == ItemState::Unlabeled)
            .filter_map(|i| i.features.as_deref().map(|f| (&i.id, f)))
            .collect();
        let scores: Vec<(ItemId, f64)> = candidates
            .par_iter()
            .map(|(id, f)| model.score(f).map(|s| ((*id).clone(), s)))
            .collect::<Result<_, _>>()?;
        let part = apply_thresholds(scores, pair)?;
        for id in &part.auto_positive {
            pool.transition(id, ItemState::AutoPositive, Provenance::Auto, iteration)?;
        }
        for id in &part.auto_negative {
            pool.transition(id, ItemState::AutoNegative, Provenance::Auto, iteration)?;
        }
        Ok((part.auto_positive.len(), part.auto_negative.len()))
    }

    /// Runs (or resumes) one full iteration.
    pub fn run_iteration<F, H>(
        &self,
        pool: &mut PoolStore,
        factory: &mut F,
        crowd: &mut H,
    ) -> Result<IterationOutcome, CascadeError>
    where
        F: ScorerFactory,
        H: HumanLabeler + ?Sized,
    {
        let ticket = match self.open_ticket(pool) {
            Some(t) => t.clone(),
            None => self.begin_iteration(pool)?,
        };
        crowd.label(pool, &self.category, &ticket)?;
        self.finish_iteration(pool, factory)
    }

    /// Iterates until the run is finished.
    pub fn run<F, H>(
        &self,
        pool: &mut PoolStore,
        factory: &mut F,
        crowd: &mut H,
    ) -> Result<Vec<IterationOutcome>, CascadeError>
    where
        F: ScorerFactory,
        H: HumanLabeler + ?Sized,
    {
        let mut outcomes = Vec::new();
        while !self.is_finished(pool) {
            outcomes.push(self.run_iteration(pool, factory, crowd)?);
        }
        Ok(outcomes)
    }
}
