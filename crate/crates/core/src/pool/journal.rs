//! Line-delimited event journal: `{seq, timestamp, event_kind, payload}` per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::item::{ItemState, Provenance, Vote};
use super::query::CategorySpec;
use crate::cascade::{IterationReport, IterationTicket, PrecisionAudit};
use crate::clock::Timestamp;
use crate::crowd::GradedSubmission;
use crate::types::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedItem {
    pub id: ItemId,
    pub url: String,
    pub width: u32,
    pub height: u32,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    /// `Unlabeled` or `RejectedAtIngest`.
    pub state: ItemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_kind", content = "payload", rename_all = "snake_case")]
pub enum JournalEvent {
    CategoryRegistered(CategorySpec),
    ItemIngested(IngestedItem),
    StateChanged {
        item_id: ItemId,
        to: ItemState,
        provenance: Provenance,
        iteration: u32,
    },
    LabelRecorded {
        item_id: ItemId,
        vote: Vote,
    },
    SubmissionGraded(GradedSubmission),
    IterationStarted {
        category: String,
        ticket: IterationTicket,
    },
    IterationCompleted {
        category: String,
        report: IterationReport,
        carried: Vec<ItemId>,
    },
    AuditRecorded {
        category: String,
        audit: PrecisionAudit,
    },
}

impl JournalEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            JournalEvent::CategoryRegistered(_) => "category_registered",
            JournalEvent::ItemIngested(_) => "item_ingested",
            JournalEvent::StateChanged { .. } => "state_changed",
            JournalEvent::LabelRecorded { .. } => "label_recorded",
            JournalEvent::SubmissionGraded(_) => "submission_graded",
            JournalEvent::IterationStarted { .. } => "iteration_started",
            JournalEvent::IterationCompleted { .. } => "iteration_completed",
            JournalEvent::AuditRecorded { .. } => "audit_recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub event: JournalEvent,
}

impl JournalRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("journal records always serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal line {line} (byte offset {offset}): {reason}")]
    Corrupt {
        line: usize,
        offset: u64,
        reason: String,
    },
    #[error("journal io: {0}")]
    Io(#[from] io::Error),
}

/// Parses a journal, checking that `seq` increases by exactly one per record
/// starting at `first_seq`.
pub fn read_journal<R: BufRead>(
    mut reader: R,
    first_seq: u64,
) -> Result<Vec<JournalRecord>, JournalError> {
    let mut records = Vec::new();
    let mut buf = String::new();
    let mut offset = 0u64;
    let mut line = 0usize;
    let mut expected = first_seq;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line += 1;
        let text = buf.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            offset += n as u64;
            continue;
        }
        let record: JournalRecord =
            serde_json::from_str(text).map_err(|e| JournalError::Corrupt {
                line,
                offset,
                reason: e.to_string(),
            })?;
        if record.seq != expected {
            return Err(JournalError::Corrupt {
                line,
                offset,
                reason: format!("expected seq {expected}, found {}", record.seq),
            });
        }
        expected += 1;
        records.push(record);
        offset += n as u64;
    }
    Ok(records)
}

pub fn write_journal<W: Write>(mut out: W, records: &[JournalRecord]) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()
}
