//! Candidate-item pool: query plans, manifest ingest, the item lifecycle
//! state machine, uniform sampling and journaled persistence.

mod ingest;
mod item;
mod journal;
mod query;
mod store;

pub use ingest::{
    id_from_url, passes_size_filter, IngestOptions, IngestReport, MalformedRow, ManifestRow,
    DEFAULT_MIN_DIM,
};
pub use item::{ItemRecord, ItemState, Provenance, StateChange, Vote};
pub use journal::{read_journal, write_journal, IngestedItem, JournalError, JournalEvent, JournalRecord};
pub use query::{
    date_spans, generate_query_plan, CategoryKind, CategorySpec, Query, QueryPlan, DEFAULT_SPAN_DAYS,
};
pub use store::{ExportRow, PoolSnapshot, PoolState, PoolStore, RunLog, StateCounts};

use crate::types::ItemId;

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("item {0} not found")]
    NotFound(ItemId),
    #[error("state conflict on item {id}: {from} -> {to} is not allowed")]
    StateConflict {
        id: ItemId,
        from: ItemState,
        to: ItemState,
    },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
