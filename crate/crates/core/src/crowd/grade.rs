use serde::{Deserialize, Serialize};

use super::hit::{HitSpec, SlotKind, HIDDEN_SLOTS, HIT_SLOTS, ONLINE_SLOTS};
use crate::clock::Timestamp;
use crate::types::{Answer, HitId, WorkerId};

pub const ONLINE_PASS_PERCENT: usize = 90;
pub const HIDDEN_PASS_PERCENT: usize = 85;

/// Smallest count reaching `percent` of `total`, by integer ceiling.
pub const fn pass_count(total: usize, percent: usize) -> usize {
    (total * percent).div_ceil(100)
}

pub const ONLINE_PASS: usize = pass_count(ONLINE_SLOTS, ONLINE_PASS_PERCENT);
pub const HIDDEN_PASS: usize = pass_count(HIDDEN_SLOTS, HIDDEN_PASS_PERCENT);

/// One worker's answers to one HIT, indexed like the HIT's slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitAssignment {
    pub hit_id: HitId,
    pub worker_id: WorkerId,
    pub answers: Vec<Answer>,
    pub submitted_at: Timestamp,
    #[serde(default)]
    pub online_pass: bool,
    #[serde(default)]
    pub hidden_pass: bool,
}

impl HitAssignment {
    /// An untouched assignment: every slot at the default "no".
    pub fn blank(hit_id: HitId, worker_id: WorkerId, submitted_at: Timestamp) -> Self {
        Self {
            hit_id,
            worker_id,
            answers: vec![Answer::No; HIT_SLOTS],
            submitted_at,
            online_pass: false,
            hidden_pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineGrade {
    pub correct: usize,
    pub total: usize,
    pub passed: bool,
    /// 0-based slot indices answered wrongly. Safe to show the worker.
    pub wrong: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenGrade {
    pub correct: usize,
    pub total: usize,
    pub passed: bool,
}

fn wrong_of(assignment: &HitAssignment, spec: &HitSpec, kind: SlotKind) -> Vec<usize> {
    spec.positions(kind)
        .filter(|&i| assignment.answers.get(i).copied() != spec.slots[i].truth)
        .collect()
}

pub fn grade_online(assignment: &HitAssignment, spec: &HitSpec) -> OnlineGrade {
    let total = spec.count(SlotKind::Online);
    let wrong = wrong_of(assignment, spec, SlotKind::Online);
    let correct = total - wrong.len();
    OnlineGrade {
        correct,
        total,
        passed: correct >= pass_count(total, ONLINE_PASS_PERCENT),
        wrong,
    }
}

pub fn grade_hidden(assignment: &HitAssignment, spec: &HitSpec) -> HiddenGrade {
    let total = spec.count(SlotKind::Hidden);
    let correct = total - wrong_of(assignment, spec, SlotKind::Hidden).len();
    HiddenGrade {
        correct,
        total,
        passed: correct >= pass_count(total, HIDDEN_PASS_PERCENT),
    }
}

/// Tutorial slots the worker got wrong; the client refuses to move past them.
pub fn tutorial_mistakes(assignment: &HitAssignment, spec: &HitSpec) -> Vec<usize> {
    wrong_of(assignment, spec, SlotKind::Tutorial)
}
