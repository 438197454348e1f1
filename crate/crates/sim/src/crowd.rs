use std::collections::BTreeMap;
use std::sync::Arc;

use labelamp::cascade::{CascadeError, HumanLabeler, IterationTicket};
use labelamp::crowd::{ClientPayload, ONLINE_PASS};
use labelamp::pool::PoolStore;
use labelamp::svc::{ApiError, ErrorCode, TaskService};
use labelamp::{Answer, ItemId, ManualClock, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::world::{sim_label, SimWorker};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdStats {
    pub hits_taken: u64,
    pub abandoned: u64,
    pub honest_submissions: u64,
    pub honest_accepted: u64,
    pub spammer_submissions: u64,
    pub spammer_accepted: u64,
    /// Online answers the client made a worker revise before submitting.
    pub online_revisions: u64,
    pub online_rejections: u64,
    pub blocked_workers: u64,
}

impl CrowdStats {
    pub fn spammer_acceptance(&self) -> Option<f64> {
        (self.spammer_submissions > 0)
            .then(|| self.spammer_accepted as f64 / self.spammer_submissions as f64)
    }
}

fn labeling(e: ApiError) -> CascadeError {
    CascadeError::Labeling(format!("{:?}: {}", e.code, e.message))
}

/// Simulated workers driving the task service round-robin, the way real
/// clients would over HTTP.
#[derive(Debug)]
pub struct SimCrowd {
    pub service: TaskService,
    pub workers: Vec<SimWorker>,
    pub stats: CrowdStats,
    truths: BTreeMap<ItemId, Answer>,
    sessions: Vec<Option<(String, Timestamp)>>,
    clock: Arc<ManualClock>,
    rng: ChaCha8Rng,
    abandon_prob: f64,
    seconds_per_action: i64,
}

impl SimCrowd {
    pub fn new(
        service: TaskService,
        workers: Vec<SimWorker>,
        truths: BTreeMap<ItemId, Answer>,
        clock: Arc<ManualClock>,
        seed: u64,
        abandon_prob: f64,
        seconds_per_action: i64,
    ) -> Self {
        let sessions = vec![None; workers.len()];
        Self {
            service,
            workers,
            stats: CrowdStats::default(),
            truths,
            sessions,
            clock,
            rng: ChaCha8Rng::seed_from_u64(seed),
            abandon_prob,
            seconds_per_action,
        }
    }

    fn token(&mut self, pool: &PoolStore, w: usize) -> Result<Option<String>, CascadeError> {
        let now = pool.now();
        if let Some((token, expires)) = &self.sessions[w] {
            if *expires > now + self.service.config().assignment_timeout_secs {
                return Ok(Some(token.clone()));
            }
        }
        match self.service.create_session(pool, &self.workers[w].worker_id) {
            Ok(s) => {
                self.sessions[w] = Some((s.token.clone(), s.expires_at));
                Ok(Some(s.token))
            }
            Err(e) if e.code == ErrorCode::WorkerBlocked => Ok(None),
            Err(e) => Err(labeling(e)),
        }
    }

    fn answer(&mut self, w: usize, payload: &ClientPayload) -> Result<Vec<Answer>, CascadeError> {
        let worker = self.workers[w].clone();
        let mut answers = Vec::with_capacity(payload.slots.len());
        for slot in &payload.slots {
            let a = if let Some(hint) = &slot.tutorial {
                // the tutorial popup blocks until the answer matches
                hint.truth
            } else {
                let truth = match slot.check {
                    Some(c) => c,
                    None => *self.truths.get(&slot.item_id).ok_or_else(|| {
                        CascadeError::Labeling(format!("no simulated truth for {}", slot.item_id))
                    })?,
                };
                sim_label(&worker, truth, &mut self.rng)
            };
            answers.push(a);
        }
        // the client refuses to submit until enough check answers are right
        loop {
            let wrong: Vec<usize> = payload
                .slots
                .iter()
                .enumerate()
                .filter(|(i, s)| s.check.is_some_and(|c| c != answers[*i]))
                .map(|(i, _)| i)
                .collect();
            let checks = payload.slots.iter().filter(|s| s.check.is_some()).count();
            if checks - wrong.len() >= ONLINE_PASS {
                break;
            }
            for i in wrong {
                let truth = payload.slots[i].check.expect("check slot");
                self.stats.online_revisions += 1;
                answers[i] = if worker.is_spammer {
                    truth
                } else {
                    sim_label(&worker, truth, &mut self.rng)
                };
            }
        }
        Ok(answers)
    }

    /// One worker action. Returns whether anything happened.
    fn act(&mut self, pool: &mut PoolStore, category: &str, w: usize) -> Result<bool, CascadeError> {
        let Some(token) = self.token(pool, w)? else {
            return Ok(false);
        };
        let payload = match self.service.next_hit(pool, &token, category) {
            Ok(p) => p,
            Err(e) if matches!(e.code, ErrorCode::NoWork | ErrorCode::WorkerBlocked) => return Ok(false),
            Err(e) => return Err(labeling(e)),
        };
        self.stats.hits_taken += 1;
        self.clock.advance(self.seconds_per_action);
        if self.rng.random_bool(self.abandon_prob) {
            self.stats.abandoned += 1;
            return Ok(true);
        }
        let answers = self.answer(w, &payload)?;
        let spammer = self.workers[w].is_spammer;
        if spammer {
            self.stats.spammer_submissions += 1;
        } else {
            self.stats.honest_submissions += 1;
        }
        let was_blocked = pool.quality().is_blocked(&self.workers[w].worker_id);
        match self.service.submit(pool, &token, &payload.hit_id, answers) {
            Ok(_) => {
                if spammer {
                    self.stats.spammer_accepted += 1;
                } else {
                    self.stats.honest_accepted += 1;
                }
            }
            Err(e) if e.code == ErrorCode::QualityCheckFailed => {}
            Err(e) if e.code == ErrorCode::OnlineCheckFailed => self.stats.online_rejections += 1,
            Err(e) => return Err(labeling(e)),
        }
        if !was_blocked && pool.quality().is_blocked(&self.workers[w].worker_id) {
            self.stats.blocked_workers += 1;
        }
        Ok(true)
    }
}

impl HumanLabeler for SimCrowd {
    fn label(
        &mut self,
        pool: &mut PoolStore,
        category: &str,
        _ticket: &IterationTicket,
    ) -> Result<(), CascadeError> {
        let mut idle = 0;
        while !self.service.is_drained(pool, category).map_err(labeling)? {
            let mut progress = false;
            for w in 0..self.workers.len() {
                if pool.quality().is_blocked(&self.workers[w].worker_id) {
                    continue;
                }
                progress |= self.act(pool, category, w)?;
            }
            if progress {
                idle = 0;
                continue;
            }
            idle += 1;
            if idle > 2 {
                return Err(CascadeError::Labeling(format!(
                    "labeling stalled: {} pending, {} open hits, no eligible worker",
                    self.service.pending(category),
                    self.service.open_hits(category)
                )));
            }
            // let abandoned seats time out
            self.clock.advance(self.service.config().assignment_timeout_secs);
        }
        Ok(())
    }
}
