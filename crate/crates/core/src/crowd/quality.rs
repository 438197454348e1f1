use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::grade::{grade_hidden, grade_online, HitAssignment, OnlineGrade};
use super::hit::{HitSpec, SlotKind, HIT_SLOTS};
use super::CrowdError;
use crate::pool::PoolError;
use crate::types::{Answer, HitId, ItemId, WorkerId};

pub const BLOCK_WINDOW: usize = 5;
pub const BLOCK_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    HiddenFailed,
}

/// The durable record of a finalized submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedSubmission {
    pub hit_id: HitId,
    pub worker_id: WorkerId,
    pub verdict: Verdict,
    pub online_correct: usize,
    pub hidden_correct: usize,
    pub hidden_total: usize,
}

impl GradedSubmission {
    pub fn hidden_accuracy(&self) -> f64 {
        if self.hidden_total == 0 {
            1.0
        } else {
            self.hidden_correct as f64 / self.hidden_total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: WorkerId,
    pub hits_submitted: u64,
    pub hits_accepted: u64,
    /// Hidden accuracy of the most recent submissions, oldest first.
    pub hidden_accuracy_history: Vec<f64>,
    pub blocked: bool,
}

impl WorkerProfile {
    pub fn rolling_hidden_accuracy(&self) -> Option<f64> {
        let h = &self.hidden_accuracy_history;
        (!h.is_empty()).then(|| h.iter().sum::<f64>() / h.len() as f64)
    }
}

/// A target answer from an accepted submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub item_id: ItemId,
    pub worker_id: WorkerId,
    pub hit_id: HitId,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    /// The worker may revise and resubmit.
    OnlineCheckFailed(OnlineGrade),
    /// Final. Carries no item-level detail.
    QualityCheckFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmissionOutcome {
    Accepted {
        graded: GradedSubmission,
        events: Vec<LabelEvent>,
    },
    Rejected {
        rejection: Rejection,
        /// Present when the rejection is final and must be journaled.
        graded: Option<GradedSubmission>,
    },
}

/// Worker reputation and the set of finalized (hit, worker) pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityLedger {
    workers: BTreeMap<WorkerId, WorkerProfile>,
    finalized: BTreeSet<(HitId, WorkerId)>,
}

impl QualityLedger {
    pub fn worker(&self, id: &WorkerId) -> Option<&WorkerProfile> {
        self.workers.get(id)
    }

    pub fn workers(&self) -> impl Iterator<Item = &WorkerProfile> {
        self.workers.values()
    }

    pub fn is_blocked(&self, id: &WorkerId) -> bool {
        self.workers.get(id).is_some_and(|w| w.blocked)
    }

    pub fn is_finalized(&self, hit: &HitId, worker: &WorkerId) -> bool {
        self.finalized.contains(&(hit.clone(), worker.clone()))
    }

    pub fn finalized(&self) -> impl Iterator<Item = &(HitId, WorkerId)> {
        self.finalized.iter()
    }

    /// Grades a submission without changing the ledger.
    pub fn evaluate(
        &self,
        assignment: &HitAssignment,
        spec: &HitSpec,
    ) -> Result<SubmissionOutcome, CrowdError> {
        if assignment.hit_id != spec.hit_id {
            return Err(CrowdError::Malformed(format!(
                "answers for {} submitted against {}",
                assignment.hit_id, spec.hit_id
            )));
        }
        if assignment.answers.len() != HIT_SLOTS || spec.slots.len() != HIT_SLOTS {
            return Err(CrowdError::Malformed(format!(
                "{} answers, expected {HIT_SLOTS}",
                assignment.answers.len()
            )));
        }
        if self.is_finalized(&assignment.hit_id, &assignment.worker_id) {
            return Err(CrowdError::Conflict(format!(
                "{} already submitted {}",
                assignment.worker_id, assignment.hit_id
            )));
        }
        let online = grade_online(assignment, spec);
        if !online.passed {
            return Ok(SubmissionOutcome::Rejected {
                rejection: Rejection::OnlineCheckFailed(online),
                graded: None,
            });
        }
        let hidden = grade_hidden(assignment, spec);
        let graded = GradedSubmission {
            hit_id: assignment.hit_id.clone(),
            worker_id: assignment.worker_id.clone(),
            verdict: if hidden.passed {
                Verdict::Accepted
            } else {
                Verdict::HiddenFailed
            },
            online_correct: online.correct,
            hidden_correct: hidden.correct,
            hidden_total: hidden.total,
        };
        if !hidden.passed {
            return Ok(SubmissionOutcome::Rejected {
                rejection: Rejection::QualityCheckFailed,
                graded: Some(graded),
            });
        }
        let events = spec
            .slots
            .iter()
            .zip(&assignment.answers)
            .filter(|(slot, _)| slot.kind == SlotKind::Target)
            .map(|(slot, &answer)| LabelEvent {
                item_id: slot.item.item_id.clone(),
                worker_id: assignment.worker_id.clone(),
                hit_id: assignment.hit_id.clone(),
                answer,
            })
            .collect();
        Ok(SubmissionOutcome::Accepted { graded, events })
    }

    pub fn apply(&mut self, graded: &GradedSubmission) -> Result<(), PoolError> {
        let key = (graded.hit_id.clone(), graded.worker_id.clone());
        if self.finalized.contains(&key) {
            return Err(PoolError::Conflict(format!(
                "{} already submitted {}",
                graded.worker_id, graded.hit_id
            )));
        }
        if graded.hidden_correct > graded.hidden_total {
            return Err(PoolError::InvalidArgument(format!(
                "hidden count {} of {}",
                graded.hidden_correct, graded.hidden_total
            )));
        }
        self.finalized.insert(key);
        let profile = self
            .workers
            .entry(graded.worker_id.clone())
            .or_insert_with(|| WorkerProfile {
                worker_id: graded.worker_id.clone(),
                ..WorkerProfile::default()
            });
        profile.hits_submitted += 1;
        if graded.verdict == Verdict::Accepted {
            profile.hits_accepted += 1;
        }
        profile.hidden_accuracy_history.push(graded.hidden_accuracy());
        let excess = profile.hidden_accuracy_history.len().saturating_sub(BLOCK_WINDOW);
        profile.hidden_accuracy_history.drain(..excess);
        profile.blocked = profile
            .rolling_hidden_accuracy()
            .is_some_and(|a| a < BLOCK_THRESHOLD);
        Ok(())
    }
}
