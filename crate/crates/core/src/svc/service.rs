use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ApiError, ErrorCode};
use crate::clock::Timestamp;
use crate::crowd::{
    assemble_hit, consensus, redact_for_client, ClientPayload, ConsensusOutcome, ConsensusPolicy,
    CrowdError, GoldPools, HitAssignment, HitSpec, ItemRef, Rejection, SlotKind, SubmissionOutcome,
    HIT_SLOTS, ONLINE_PASS, TARGET_SLOTS,
};
use crate::pool::{ItemState, PoolStore, Provenance, Vote};
use crate::types::{Answer, HitId, ItemId, Label, WorkerId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub session_ttl_secs: i64,
    pub assignment_timeout_secs: i64,
    /// A worker is not shown the same gold item again within this many of
    /// the HITs assembled for them.
    pub gold_window: usize,
    pub consensus: ConsensusPolicy,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_ttl_secs: 12 * 3600,
            assignment_timeout_secs: 30 * 60,
            gold_window: 20,
            consensus: ConsensusPolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub worker_id: WorkerId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAccepted {
    pub hit_id: HitId,
    pub labels_recorded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seat {
    Active { expires_at: Timestamp },
    Accepted,
}

#[derive(Debug, Clone)]
struct OpenHit {
    spec: HitSpec,
    /// Target slots padded with gold items; their answers are dropped.
    fillers: BTreeSet<ItemId>,
    seats: BTreeMap<WorkerId, Seat>,
}

impl OpenHit {
    fn real_targets(&self) -> impl Iterator<Item = &ItemId> {
        self.spec
            .targets()
            .map(|t| &t.item_id)
            .filter(|id| !self.fillers.contains(*id))
    }

    fn accepted(&self) -> usize {
        self.seats.values().filter(|s| **s == Seat::Accepted).count()
    }
}

#[derive(Debug, Default)]
struct Queue {
    iteration: u32,
    pending: VecDeque<ItemId>,
    hits: BTreeMap<HitId, OpenHit>,
    next_hit: u64,
}

/// Session and assignment bookkeeping. Durable effects (state changes,
/// votes, graded submissions) go through the store; the rest lives here and
/// is rebuilt from the store after a restart.
#[derive(Debug)]
pub struct TaskService {
    config: ServiceConfig,
    gold: BTreeMap<String, GoldPools>,
    sessions: BTreeMap<String, Session>,
    queues: BTreeMap<String, Queue>,
    recent_gold: BTreeMap<WorkerId, VecDeque<Vec<ItemId>>>,
    rng: ChaCha8Rng,
}

fn hit_prefix(category: &str, iteration: u32) -> String {
    format!("{category}-{iteration}-")
}

fn mix(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

impl TaskService {
    pub fn new(config: ServiceConfig) -> Result<Self, ApiError> {
        config
            .consensus
            .validate()
            .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            gold: BTreeMap::new(),
            sessions: BTreeMap::new(),
            queues: BTreeMap::new(),
            recent_gold: BTreeMap::new(),
            rng,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Installs the gold pools of a category. Gold items without a URL take
    /// the URL of the pool item with the same id; a gold slot must look like
    /// any other image to the client.
    pub fn set_gold(
        &mut self,
        pool: &PoolStore,
        category: &str,
        mut pools: GoldPools,
    ) -> Result<(), ApiError> {
        for item in pools
            .tutorial
            .iter_mut()
            .chain(pools.online.iter_mut())
            .chain(pools.hidden.iter_mut())
        {
            if item.url.is_none() {
                let url = pool.item(&item.item_id).map(|i| i.url.clone()).ok_or_else(|| {
                    ApiError::new(
                        ErrorCode::InvalidRequest,
                        format!("gold item {} has no url and is not in the pool", item.item_id),
                    )
                })?;
                item.url = Some(url);
            }
        }
        self.gold.insert(category.to_owned(), pools);
        Ok(())
    }

    pub fn gold(&self, category: &str) -> Option<&GoldPools> {
        self.gold.get(category)
    }

    // ---- sessions -------------------------------------------------------

    pub fn create_session(&mut self, pool: &PoolStore, worker_id: &WorkerId) -> Result<Session, ApiError> {
        if worker_id.as_str().trim().is_empty() {
            return Err(ApiError::new(ErrorCode::InvalidRequest, "worker_id is empty"));
        }
        if pool.quality().is_blocked(worker_id) {
            return Err(ApiError::new(ErrorCode::WorkerBlocked, "worker is blocked"));
        }
        let now = pool.now();
        let token: [u8; 16] = self.rng.random();
        let session = Session {
            token: hex::encode(token),
            worker_id: worker_id.clone(),
            issued_at: now,
            expires_at: now + self.config.session_ttl_secs,
        };
        self.sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    fn authenticate(&self, pool: &PoolStore, token: &str) -> Result<WorkerId, ApiError> {
        let session = self
            .sessions
            .get(token)
            .ok_or_else(|| ApiError::new(ErrorCode::InvalidSession, "unknown session token"))?;
        if pool.now() >= session.expires_at {
            return Err(ApiError::new(ErrorCode::SessionExpired, "session expired"));
        }
        if pool.quality().is_blocked(&session.worker_id) {
            return Err(ApiError::new(ErrorCode::WorkerBlocked, "worker is blocked"));
        }
        Ok(session.worker_id.clone())
    }

    // ---- queue maintenance ----------------------------------------------

    /// Aligns the queue with the open iteration. On a new iteration (or
    /// after a restart) pending targets are rebuilt from the store and
    /// in-flight items without a known HIT are released.
    fn sync(&mut self, pool: &mut PoolStore, category: &str) -> Result<Option<u32>, ApiError> {
        if pool.category(category).is_none() {
            return Err(ApiError::new(ErrorCode::NotFound, format!("unknown category {category}")));
        }
        let Some(ticket) = pool.run(category).and_then(|r| r.open.clone()) else {
            self.queues.remove(category);
            return Ok(None);
        };
        if self.queues.get(category).is_some_and(|q| q.iteration == ticket.iteration) {
            return Ok(Some(ticket.iteration));
        }
        let prefix = hit_prefix(category, ticket.iteration);
        let next_hit = pool
            .quality()
            .finalized()
            .filter_map(|(h, _)| h.as_str().strip_prefix(&prefix)?.parse::<u64>().ok())
            .max()
            .map_or(0, |n| n + 1);
        let mut queue = Queue {
            iteration: ticket.iteration,
            next_hit,
            ..Queue::default()
        };
        for id in ticket.targets() {
            match pool.item(id).map(|i| i.state) {
                Some(ItemState::Unlabeled) => queue.pending.push_back(id.clone()),
                Some(ItemState::InFlight) => {
                    pool.transition(id, ItemState::Unlabeled, Provenance::Human, ticket.iteration)?;
                    queue.pending.push_back(id.clone());
                }
                _ => {}
            }
        }
        self.queues.insert(category.to_owned(), queue);
        Ok(Some(ticket.iteration))
    }

    /// Frees timed-out seats and dissolves HITs nobody holds.
    fn reclaim(&mut self, pool: &mut PoolStore, category: &str) -> Result<(), ApiError> {
        let now = pool.now();
        let Some(queue) = self.queues.get_mut(category) else {
            return Ok(());
        };
        let mut dissolve = Vec::new();
        for (hit_id, hit) in queue.hits.iter_mut() {
            hit.seats
                .retain(|_, seat| !matches!(seat, Seat::Active { expires_at } if *expires_at <= now));
            if hit.seats.is_empty() {
                dissolve.push(hit_id.clone());
            }
        }
        for hit_id in dissolve {
            self.dissolve(pool, category, &hit_id)?;
        }
        Ok(())
    }

    fn dissolve(&mut self, pool: &mut PoolStore, category: &str, hit_id: &HitId) -> Result<(), ApiError> {
        let queue = self.queues.get_mut(category).expect("queue exists");
        let Some(hit) = queue.hits.remove(hit_id) else {
            return Ok(());
        };
        let targets: Vec<ItemId> = hit.real_targets().cloned().collect();
        for id in targets.iter().rev() {
            pool.transition(id, ItemState::Unlabeled, Provenance::Human, queue.iteration)?;
            queue.pending.push_front(id.clone());
        }
        log::debug!("dissolved {hit_id}, {} targets requeued", targets.len());
        Ok(())
    }

    /// True when the open iteration of `category` has nothing pending and no
    /// HIT in progress, or when no iteration is open.
    pub fn is_drained(&mut self, pool: &mut PoolStore, category: &str) -> Result<bool, ApiError> {
        if self.sync(pool, category)?.is_none() {
            return Ok(true);
        }
        self.reclaim(pool, category)?;
        let q = &self.queues[category];
        Ok(q.pending.is_empty() && q.hits.is_empty())
    }

    pub fn pending(&self, category: &str) -> usize {
        self.queues.get(category).map_or(0, |q| q.pending.len())
    }

    pub fn open_hits(&self, category: &str) -> usize {
        self.queues.get(category).map_or(0, |q| q.hits.len())
    }

    /// Server-side spec of an open HIT.
    pub fn hit_spec(&self, hit_id: &HitId) -> Option<&HitSpec> {
        self.queues.values().find_map(|q| q.hits.get(hit_id)).map(|h| &h.spec)
    }

    // ---- assignment -----------------------------------------------------

    pub fn next_hit(
        &mut self,
        pool: &mut PoolStore,
        token: &str,
        category: &str,
    ) -> Result<ClientPayload, ApiError> {
        let worker = self.authenticate(pool, token)?;
        let Some(iteration) = self.sync(pool, category)? else {
            return Err(ApiError::new(ErrorCode::NoWork, "no labeling iteration is open"));
        };
        self.reclaim(pool, category)?;
        let now = pool.now();
        let expires_at = now + self.config.assignment_timeout_secs;
        let redundancy = self.config.consensus.required_confirmations;
        let definition = pool
            .category(category)
            .map(|c| c.definition_text.clone())
            .unwrap_or_default();

        let queue = self.queues.get_mut(category).expect("synced");
        let existing = queue.hits.iter().find(|(hit_id, hit)| {
            hit.seats.len() < redundancy
                && !hit.seats.contains_key(&worker)
                && !pool.quality().is_finalized(hit_id, &worker)
                && hit
                    .real_targets()
                    .all(|id| pool.item(id).is_some_and(|i| !i.has_vote_from(&worker)))
        });
        if let Some((hit_id, _)) = existing {
            let hit_id = hit_id.clone();
            let hit = queue.hits.get_mut(&hit_id).expect("present");
            hit.seats.insert(worker, Seat::Active { expires_at });
            return Ok(redact_for_client(&hit.spec, &definition));
        }

        let mut picked = Vec::new();
        let mut rest = VecDeque::new();
        while let Some(id) = queue.pending.pop_front() {
            let eligible = picked.len() < TARGET_SLOTS
                && pool.item(&id).is_some_and(|i| i.state == ItemState::Unlabeled && !i.has_vote_from(&worker));
            if eligible {
                picked.push(id);
            } else if pool.item(&id).is_some_and(|i| i.state == ItemState::Unlabeled) {
                rest.push_back(id);
            }
            if picked.len() == TARGET_SLOTS {
                break;
            }
        }
        rest.append(&mut queue.pending);
        queue.pending = rest;
        if picked.is_empty() {
            return Err(ApiError::new(ErrorCode::NoWork, "no work available for this worker"));
        }

        let hit_id = HitId::new(format!("{}{}", hit_prefix(category, iteration), queue.next_hit));
        let seed = mix(self.config.seed, &[hit_id.as_str()]);
        let built = self.build_hit(pool, category, &worker, hit_id.clone(), &picked, seed);
        let queue = self.queues.get_mut(category).expect("synced");
        let (spec, fillers) = match built {
            Ok(b) => b,
            Err(e) => {
                for id in picked.into_iter().rev() {
                    queue.pending.push_front(id);
                }
                return Err(e);
            }
        };
        queue.next_hit += 1;
        for id in &picked {
            pool.transition(id, ItemState::InFlight, Provenance::Human, iteration)?;
        }
        let payload = redact_for_client(&spec, &definition);
        let mut seats = BTreeMap::new();
        seats.insert(worker, Seat::Active { expires_at });
        queue.hits.insert(hit_id, OpenHit { spec, fillers, seats });
        Ok(payload)
    }

    fn build_hit(
        &mut self,
        pool: &PoolStore,
        category: &str,
        worker: &WorkerId,
        hit_id: HitId,
        picked: &[ItemId],
        seed: u64,
    ) -> Result<(HitSpec, BTreeSet<ItemId>), ApiError> {
        let gold = self.gold.get(category).ok_or_else(|| {
            ApiError::new(ErrorCode::GoldPoolExhausted, format!("no gold pool for {category}"))
        })?;
        let mut targets: Vec<ItemRef> = picked
            .iter()
            .map(|id| ItemRef {
                item_id: id.clone(),
                url: pool.item(id).map(|i| i.url.clone()).unwrap_or_default(),
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut fillers = BTreeSet::new();
        let short = TARGET_SLOTS - targets.len();
        if short > 0 {
            let all: Vec<_> = gold.all().collect();
            if all.len() < short {
                return Err(ApiError::new(
                    ErrorCode::GoldPoolExhausted,
                    format!("{} gold items cannot pad {short} slots", all.len()),
                ));
            }
            for i in index::sample(&mut rng, all.len(), short) {
                let g = all[i];
                fillers.insert(g.item_id.clone());
                targets.push(ItemRef {
                    item_id: g.item_id.clone(),
                    url: g.url.clone().unwrap_or_default(),
                });
            }
        }

        let history = self.recent_gold.get(worker);
        let mut window = history.map_or(0, |h| h.len()).min(self.config.gold_window);
        let spec = loop {
            let mut exclude = fillers.clone();
            if let Some(h) = history {
                for shown in h.iter().rev().take(window) {
                    exclude.extend(shown.iter().cloned());
                }
            }
            match assemble_hit(hit_id.clone(), category, targets.clone(), gold, &exclude, seed) {
                Ok(spec) => break spec,
                Err(CrowdError::PoolExhausted { .. }) if window > 0 => window -= 1,
                Err(e) => return Err(e.into()),
            }
        };
        let shown: Vec<ItemId> = spec
            .slots
            .iter()
            .filter(|s| s.kind != SlotKind::Target)
            .map(|s| s.item.item_id.clone())
            .collect();
        let h = self.recent_gold.entry(worker.clone()).or_default();
        h.push_back(shown);
        while h.len() > self.config.gold_window {
            h.pop_front();
        }
        Ok((spec, fillers))
    }

    // ---- submission -----------------------------------------------------

    pub fn submit(
        &mut self,
        pool: &mut PoolStore,
        token: &str,
        hit_id: &HitId,
        answers: Vec<Answer>,
    ) -> Result<SubmitAccepted, ApiError> {
        let worker = self.authenticate(pool, token)?;
        let category = self
            .queues
            .iter()
            .find(|(_, q)| q.hits.contains_key(hit_id))
            .map(|(c, _)| c.clone());
        let Some(category) = category else {
            if pool.quality().is_finalized(hit_id, &worker) {
                return Err(ApiError::new(ErrorCode::Conflict, format!("{hit_id} already submitted")));
            }
            return Err(ApiError::new(ErrorCode::NotFound, format!("no open hit {hit_id}")));
        };
        self.reclaim(pool, &category)?;
        let queue = self.queues.get_mut(&category).expect("present");
        let Some(hit) = queue.hits.get(hit_id) else {
            return Err(ApiError::new(ErrorCode::NotFound, format!("{hit_id} expired")));
        };
        match hit.seats.get(&worker) {
            Some(Seat::Active { .. }) => {}
            Some(Seat::Accepted) => {
                return Err(ApiError::new(ErrorCode::Conflict, format!("{hit_id} already submitted")))
            }
            None if pool.quality().is_finalized(hit_id, &worker) => {
                return Err(ApiError::new(ErrorCode::Conflict, format!("{hit_id} already submitted")))
            }
            None => {
                return Err(ApiError::new(
                    ErrorCode::NotFound,
                    format!("no active assignment of {hit_id} for this worker"),
                ))
            }
        }
        if answers.len() != HIT_SLOTS {
            return Err(ApiError::new(
                ErrorCode::MalformedSubmission,
                format!("{} answers, expected {HIT_SLOTS}", answers.len()),
            ));
        }
        let assignment = HitAssignment {
            hit_id: hit_id.clone(),
            worker_id: worker.clone(),
            answers,
            submitted_at: pool.now(),
            online_pass: false,
            hidden_pass: false,
        };
        match pool.quality().evaluate(&assignment, &hit.spec)? {
            SubmissionOutcome::Rejected {
                rejection: Rejection::OnlineCheckFailed(grade),
                ..
            } => Err(ApiError::new(
                ErrorCode::OnlineCheckFailed,
                format!(
                    "{} of {} check answers correct, {ONLINE_PASS} required; revise and resubmit",
                    grade.correct, grade.total
                ),
            )),
            SubmissionOutcome::Rejected { graded, .. } => {
                if let Some(graded) = graded {
                    pool.record_submission(graded)?;
                }
                let hit = queue.hits.get_mut(hit_id).expect("present");
                hit.seats.remove(&worker);
                if hit.seats.is_empty() {
                    self.dissolve(pool, &category, hit_id)?;
                }
                Err(ApiError::new(
                    ErrorCode::QualityCheckFailed,
                    "submission did not pass quality checks",
                ))
            }
            SubmissionOutcome::Accepted { graded, events } => {
                pool.record_submission(graded)?;
                let mut recorded = 0;
                for ev in events.into_iter().filter(|e| !hit.fillers.contains(&e.item_id)) {
                    pool.record_vote(
                        &ev.item_id,
                        Vote {
                            worker_id: ev.worker_id,
                            hit_id: ev.hit_id,
                            answer: ev.answer,
                        },
                    )?;
                    recorded += 1;
                }
                let hit = queue.hits.get_mut(hit_id).expect("present");
                hit.seats.insert(worker, Seat::Accepted);
                if hit.accepted() >= self.config.consensus.required_confirmations {
                    self.settle(pool, &category, hit_id)?;
                }
                Ok(SubmitAccepted {
                    hit_id: hit_id.clone(),
                    labels_recorded: recorded,
                })
            }
        }
    }

    /// Runs consensus on a fully answered HIT and resolves or requeues its targets.
    fn settle(&mut self, pool: &mut PoolStore, category: &str, hit_id: &HitId) -> Result<(), ApiError> {
        let policy = self.config.consensus;
        let queue = self.queues.get_mut(category).expect("present");
        let hit = queue.hits.remove(hit_id).expect("present");
        let prefix = hit_prefix(category, queue.iteration);
        let mut requeue = Vec::new();
        for id in hit.real_targets() {
            let votes: Vec<(WorkerId, Answer)> = pool
                .item(id)
                .map(|i| {
                    i.votes
                        .iter()
                        .filter(|v| v.hit_id.as_str().starts_with(&prefix))
                        .map(|v| (v.worker_id.clone(), v.answer))
                        .collect()
                })
                .unwrap_or_default();
            let next = match consensus(&votes, &policy) {
                ConsensusOutcome::Positive => ItemState::human(Label::Positive),
                ConsensusOutcome::Negative => ItemState::human(Label::Negative),
                ConsensusOutcome::NeedsMore => {
                    requeue.push(id.clone());
                    ItemState::Unlabeled
                }
                ConsensusOutcome::Unresolved => ItemState::Unlabeled,
            };
            pool.transition(id, next, Provenance::Human, queue.iteration)?;
        }
        for id in requeue.into_iter().rev() {
            queue.pending.push_front(id);
        }
        Ok(())
    }
}
