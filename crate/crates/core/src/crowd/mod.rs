//! Crowd labeling: gold pools, HIT assembly and redaction, submission
//! grading, worker reputation and redundancy consensus.

mod consensus;
mod gold;
mod grade;
mod hit;
mod quality;

pub use consensus::{
    consensus, seed_corner_cases, ConflictRule, ConsensusOutcome, ConsensusPolicy, CornerCases,
};
pub use gold::{GoldItem, GoldPools, GoldRole};
pub use grade::{
    grade_hidden, grade_online, pass_count, tutorial_mistakes, HiddenGrade, HitAssignment,
    OnlineGrade, HIDDEN_PASS, HIDDEN_PASS_PERCENT, ONLINE_PASS, ONLINE_PASS_PERCENT,
};
pub use hit::{
    assemble_hit, redact_for_client, ClientPayload, ClientSlot, HitSpec, ItemRef, Slot, SlotKind,
    TutorialHint, HIDDEN_SLOTS, HIT_SLOTS, ONLINE_SLOTS, TARGET_SLOTS, TUTORIAL_SLOTS,
};
pub use quality::{
    GradedSubmission, LabelEvent, QualityLedger, Rejection, SubmissionOutcome, Verdict,
    WorkerProfile, BLOCK_THRESHOLD, BLOCK_WINDOW,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrowdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid gold pool: {0}")]
    InvalidGold(String),
    #[error("invalid hit: {0}")]
    InvalidHit(String),
    #[error("{role} gold pool exhausted: need {needed}, {available} eligible")]
    PoolExhausted {
        role: GoldRole,
        needed: usize,
        available: usize,
    },
    #[error("malformed submission: {0}")]
    Malformed(String),
    #[error("conflict: {0}")]
    Conflict(String),
}
