use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ingest::{passes_size_filter, IngestOptions, IngestReport, MalformedRow, ManifestRow};
use super::item::{ItemRecord, ItemState, Provenance, StateChange, Vote};
use super::journal::{read_journal, IngestedItem, JournalEvent, JournalRecord};
use super::query::CategorySpec;
use super::PoolError;
use crate::cascade::{IterationReport, IterationTicket, PrecisionAudit};
use crate::clock::{Clock, Timestamp};
use crate::crowd::{GradedSubmission, QualityLedger};
use crate::types::{ItemId, Label};

/// Durable progress of the cascade for one category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub open: Option<IterationTicket>,
    pub reports: Vec<IterationReport>,
    /// Human-labeled items carried into the next iteration's training set.
    pub carried: Vec<ItemId>,
    pub audits: Vec<PrecisionAudit>,
    pub finished: bool,
}

impl RunLog {
    /// Number of the last completed iteration (0 before the first).
    pub fn completed_iterations(&self) -> u32 {
        self.reports.last().map_or(0, |r| r.iteration)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    items: BTreeMap<ItemId, ItemRecord>,
    urls: BTreeSet<String>,
    categories: BTreeMap<String, CategorySpec>,
    feature_dims: BTreeMap<String, usize>,
    runs: BTreeMap<String, RunLog>,
    quality: QualityLedger,
}

/// Per-state item counts for one category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts(pub BTreeMap<ItemState, u64>);

impl StateCounts {
    pub fn get(&self, state: ItemState) -> u64 {
        self.0.get(&state).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    /// Items holding a final positive or negative label.
    pub fn resolved(&self) -> u64 {
        self.0
            .iter()
            .filter(|(s, _)| s.resolution().is_some())
            .map(|(_, n)| n)
            .sum()
    }
}

/// One line of the label export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub id: ItemId,
    pub final_label: Label,
    pub source: Provenance,
    pub iteration: u32,
}

/// Immutable view of the store at a journal position; cheap to clone and
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct PoolSnapshot {
    pub seq: u64,
    pub state: Arc<PoolState>,
}

impl PoolSnapshot {
    pub fn item(&self, id: &ItemId) -> Option<&ItemRecord> {
        self.state.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.state.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.items.is_empty()
    }
}

/// The candidate-item store. Every mutation is validated, applied and then
/// appended to the journal; all mutations go through `&mut self`, so one
/// writer at a time.
pub struct PoolStore {
    state: PoolState,
    journal: Vec<JournalRecord>,
    retain_journal: bool,
    next_seq: u64,
    sink: Option<Box<dyn Write + Send + Sync>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for PoolStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoolStore")
            .field("items", &self.state.items.len())
            .field("next_seq", &self.next_seq)
            .finish_non_exhaustive()
    }
}

impl PoolStore {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            state: PoolState::default(),
            journal: Vec::new(),
            retain_journal: true,
            next_seq: 1,
            sink: None,
            clock,
        }
    }

    /// Keep (default) or drop the in-memory copy of journal records.
    pub fn retain_journal(mut self, retain: bool) -> Self {
        self.retain_journal = retain;
        self
    }

    /// Also append every new record to `sink`, one line each.
    pub fn with_sink(mut self, sink: Box<dyn Write + Send + Sync>) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Rebuilds a store by applying `records` to an empty state.
    pub fn replay<I>(records: I, clock: Arc<dyn Clock>) -> Result<Self, PoolError>
    where
        I: IntoIterator<Item = JournalRecord>,
    {
        let mut store = Self::new(clock);
        store.replay_records(records)?;
        Ok(store)
    }

    pub fn replay_reader<R: BufRead>(reader: R, clock: Arc<dyn Clock>) -> Result<Self, PoolError> {
        let records = read_journal(reader, 1)?;
        Self::replay(records, clock)
    }

    /// Opens a journal file (creating it if missing), replays it and appends
    /// further records to it.
    pub fn open(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, PoolError> {
        let store = if path.exists() {
            let file = File::open(path)?;
            Self::replay_reader(BufReader::new(file), clock)?
        } else {
            Self::new(clock)
        };
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(store.with_sink(Box::new(std::io::BufWriter::new(sink))))
    }

    pub fn from_snapshot(snapshot: &PoolSnapshot, clock: Arc<dyn Clock>) -> Self {
        Self {
            state: (*snapshot.state).clone(),
            journal: Vec::new(),
            retain_journal: true,
            next_seq: snapshot.seq + 1,
            sink: None,
            clock,
        }
    }

    /// Applies already-journaled records (e.g. the suffix after a snapshot).
    pub fn replay_records<I>(&mut self, records: I) -> Result<(), PoolError>
    where
        I: IntoIterator<Item = JournalRecord>,
    {
        for record in records {
            if record.seq != self.next_seq {
                return Err(PoolError::Journal(super::JournalError::Corrupt {
                    line: 0,
                    offset: 0,
                    reason: format!("expected seq {}, found {}", self.next_seq, record.seq),
                }));
            }
            apply(&mut self.state, &record.event, record.timestamp).map_err(|e| {
                PoolError::InvalidArgument(format!("replay of seq {} failed: {e}", record.seq))
            })?;
            self.next_seq += 1;
            if self.retain_journal {
                self.journal.push(record);
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> PoolSnapshot {
        PoolSnapshot {
            seq: self.next_seq - 1,
            state: Arc::new(self.state.clone()),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        Arc::clone(&self.clock)
    }

    pub fn journal(&self) -> &[JournalRecord] {
        &self.journal
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn flush(&mut self) -> Result<(), PoolError> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    fn commit(&mut self, event: JournalEvent) -> Result<(), PoolError> {
        let timestamp = self.clock.now();
        apply(&mut self.state, &event, timestamp)?;
        let record = JournalRecord {
            seq: self.next_seq,
            timestamp,
            event,
        };
        self.next_seq += 1;
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{}", record.to_line())?;
        }
        if self.retain_journal {
            self.journal.push(record);
        }
        Ok(())
    }

    // ---- categories -----------------------------------------------------

    /// Registers a category. Re-registering an identical spec is a no-op.
    pub fn register_category(&mut self, spec: CategorySpec) -> Result<(), PoolError> {
        spec.validate()?;
        match self.state.categories.get(&spec.name) {
            Some(existing) if existing == &spec => Ok(()),
            Some(_) => Err(PoolError::InvalidArgument(format!(
                "category {} already registered with a different spec",
                spec.name
            ))),
            None => self.commit(JournalEvent::CategoryRegistered(spec)),
        }
    }

    pub fn category(&self, name: &str) -> Option<&CategorySpec> {
        self.state.categories.get(name)
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategorySpec> {
        self.state.categories.values()
    }

    pub fn feature_dim(&self, category: &str) -> Option<usize> {
        self.state.feature_dims.get(category).copied()
    }

    // ---- ingest ---------------------------------------------------------

    /// Ingests a line-delimited manifest. Malformed lines are counted and
    /// skipped; only I/O errors abort.
    pub fn ingest_manifest<R: BufRead>(
        &mut self,
        reader: R,
        opts: &IngestOptions,
    ) -> Result<IngestReport, PoolError> {
        let mut report = IngestReport::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = serde_json::from_str::<ManifestRow>(&line).map_err(|e| e.to_string());
            self.ingest_one(idx + 1, row, opts, &mut report)?;
        }
        Ok(report)
    }

    pub fn ingest_rows<I>(&mut self, rows: I, opts: &IngestOptions) -> Result<IngestReport, PoolError>
    where
        I: IntoIterator<Item = ManifestRow>,
    {
        let mut report = IngestReport::default();
        for (idx, row) in rows.into_iter().enumerate() {
            self.ingest_one(idx + 1, Ok(row), opts, &mut report)?;
        }
        Ok(report)
    }

    fn ingest_one(
        &mut self,
        line: usize,
        row: Result<ManifestRow, String>,
        opts: &IngestOptions,
        report: &mut IngestReport,
    ) -> Result<(), PoolError> {
        let malformed = |report: &mut IngestReport, reason: String| {
            log::warn!("manifest line {line}: {reason}");
            report.malformed += 1;
            report.malformed_rows.push(MalformedRow { line, reason });
        };
        let row = match row {
            Ok(row) => row,
            Err(reason) => {
                malformed(report, reason);
                return Ok(());
            }
        };
        let category = match (&row.category, &opts.default_category) {
            (Some(c), Some(d)) if c != d => {
                malformed(report, format!("category {c} does not match {d}"));
                return Ok(());
            }
            (Some(c), _) | (None, Some(c)) => c.clone(),
            (None, None) => {
                malformed(report, "row has no category".into());
                return Ok(());
            }
        };
        if !self.state.categories.contains_key(&category) {
            malformed(report, format!("unknown category {category}"));
            return Ok(());
        }
        if row.url.is_empty() {
            malformed(report, "empty url".into());
            return Ok(());
        }
        if let Some(features) = &row.features {
            if features.iter().any(|v| !v.is_finite()) {
                malformed(report, "non-finite feature value".into());
                return Ok(());
            }
            if let Some(dim) = self.feature_dim(&category) {
                if dim != features.len() {
                    malformed(
                        report,
                        format!("feature dimension {} != {dim}", features.len()),
                    );
                    return Ok(());
                }
            }
        }
        let id = row.item_id();
        report.seen += 1;
        if self.state.urls.contains(&row.url) {
            report.duplicate_urls += 1;
            return Ok(());
        }
        if self.state.items.contains_key(&id) {
            report.seen -= 1;
            malformed(report, format!("item id {id} already used by another url"));
            return Ok(());
        }
        let state = if passes_size_filter(row.width, row.height, opts.min_dim) {
            report.accepted += 1;
            ItemState::Unlabeled
        } else {
            report.rejected_size += 1;
            if !opts.keep_rejected {
                return Ok(());
            }
            ItemState::RejectedAtIngest
        };
        self.commit(JournalEvent::ItemIngested(IngestedItem {
            id,
            url: row.url,
            width: row.width,
            height: row.height,
            category,
            features: row.features,
            state,
        }))
    }

    // ---- lifecycle ------------------------------------------------------

    pub fn transition(
        &mut self,
        id: &ItemId,
        to: ItemState,
        provenance: Provenance,
        iteration: u32,
    ) -> Result<&ItemRecord, PoolError> {
        self.commit(JournalEvent::StateChanged {
            item_id: id.clone(),
            to,
            provenance,
            iteration,
        })?;
        Ok(&self.state.items[id])
    }

    /// Records one accepted human answer on an in-flight target.
    pub fn record_vote(&mut self, id: &ItemId, vote: Vote) -> Result<(), PoolError> {
        self.commit(JournalEvent::LabelRecorded {
            item_id: id.clone(),
            vote,
        })
    }

    pub fn record_submission(&mut self, graded: GradedSubmission) -> Result<(), PoolError> {
        self.commit(JournalEvent::SubmissionGraded(graded))
    }

    pub fn start_iteration(&mut self, category: &str, ticket: IterationTicket) -> Result<(), PoolError> {
        self.commit(JournalEvent::IterationStarted {
            category: category.to_owned(),
            ticket,
        })
    }

    pub fn complete_iteration(
        &mut self,
        category: &str,
        report: IterationReport,
        carried: Vec<ItemId>,
    ) -> Result<(), PoolError> {
        self.commit(JournalEvent::IterationCompleted {
            category: category.to_owned(),
            report,
            carried,
        })
    }

    pub fn record_audit(&mut self, category: &str, audit: PrecisionAudit) -> Result<(), PoolError> {
        self.commit(JournalEvent::AuditRecorded {
            category: category.to_owned(),
            audit,
        })
    }

    // ---- reads ----------------------------------------------------------

    pub fn item(&self, id: &ItemId) -> Option<&ItemRecord> {
        self.state.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.state.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.items.is_empty()
    }

    /// Items of one category in id order.
    pub fn items<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ItemRecord> + 'a {
        self.state
            .items
            .values()
            .filter(move |item| item.category == category)
    }

    pub fn all_items(&self) -> impl Iterator<Item = &ItemRecord> {
        self.state.items.values()
    }

    pub fn ids_in_state(&self, category: &str, state: ItemState) -> Vec<ItemId> {
        self.items(category)
            .filter(|item| item.state == state)
            .map(|item| item.id.clone())
            .collect()
    }

    pub fn counts(&self, category: &str) -> StateCounts {
        let mut counts = StateCounts::default();
        for item in self.items(category) {
            *counts.0.entry(item.state).or_default() += 1;
        }
        counts
    }

    pub fn run(&self, category: &str) -> Option<&RunLog> {
        self.state.runs.get(category)
    }

    pub fn quality(&self) -> &QualityLedger {
        &self.state.quality
    }

    /// Uniform sample without replacement of `n` items of `category` in
    /// `from_state`. The order of the returned ids is itself random.
    pub fn sample_uniform(
        &self,
        category: &str,
        n: usize,
        from_state: ItemState,
        seed: u64,
    ) -> Result<Vec<ItemId>, PoolError> {
        let ids = self.ids_in_state(category, from_state);
        if n > ids.len() {
            return Err(PoolError::InvalidArgument(format!(
                "cannot sample {n} items: only {} available in state {from_state}",
                ids.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(rand::seq::index::sample(&mut rng, ids.len(), n)
            .into_iter()
            .map(|i| ids[i].clone())
            .collect())
    }

    /// Final labels of one category, one row per resolved item in id order.
    pub fn export_rows(&self, category: &str) -> Vec<ExportRow> {
        self.items(category)
            .filter_map(|item| {
                item.state.resolution().map(|(label, source)| ExportRow {
                    id: item.id.clone(),
                    final_label: label,
                    source,
                    iteration: item.last_iteration(),
                })
            })
            .collect()
    }

    /// Line-delimited label export.
    pub fn export_labels(&self, category: &str) -> String {
        let mut out = String::new();
        for row in self.export_rows(category) {
            let _ = writeln!(out, "{}", serde_json::to_string(&row).expect("export row"));
        }
        out
    }

    /// Line-delimited dump of the whole state: categories, items, runs and
    /// worker ledger. Two stores with equal state export identical bytes.
    pub fn export_state(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, kind: &str, value: serde_json::Value| {
            let _ = writeln!(out, "{}", serde_json::json!({ "kind": kind, "value": value }));
        };
        for spec in self.state.categories.values() {
            line(&mut out, "category", serde_json::to_value(spec).expect("category"));
        }
        for item in self.state.items.values() {
            line(&mut out, "item", serde_json::to_value(item).expect("item"));
        }
        for (name, run) in &self.state.runs {
            line(
                &mut out,
                "run",
                serde_json::json!({ "category": name, "run": run }),
            );
        }
        line(
            &mut out,
            "quality",
            serde_json::to_value(&self.state.quality).expect("quality"),
        );
        out
    }
}

fn apply(state: &mut PoolState, event: &JournalEvent, at: Timestamp) -> Result<(), PoolError> {
    match event {
        JournalEvent::CategoryRegistered(spec) => {
            state.categories.insert(spec.name.clone(), spec.clone());
        }
        JournalEvent::ItemIngested(item) => {
            if !matches!(item.state, ItemState::Unlabeled | ItemState::RejectedAtIngest) {
                return Err(PoolError::InvalidArgument(format!(
                    "item {} ingested in state {}",
                    item.id, item.state
                )));
            }
            if state.items.contains_key(&item.id) {
                return Err(PoolError::InvalidArgument(format!("duplicate item id {}", item.id)));
            }
            if !state.categories.contains_key(&item.category) {
                return Err(PoolError::UnknownCategory(item.category.clone()));
            }
            if let Some(f) = &item.features {
                state
                    .feature_dims
                    .entry(item.category.clone())
                    .or_insert(f.len());
            }
            state.urls.insert(item.url.clone());
            state.items.insert(
                item.id.clone(),
                ItemRecord {
                    id: item.id.clone(),
                    url: item.url.clone(),
                    width: item.width,
                    height: item.height,
                    category: item.category.clone(),
                    features: item.features.clone(),
                    state: item.state,
                    state_history: vec![StateChange {
                        state: item.state,
                        at,
                        provenance: Provenance::Ingest,
                        iteration: 0,
                    }],
                    votes: Vec::new(),
                },
            );
        }
        JournalEvent::StateChanged {
            item_id,
            to,
            provenance,
            iteration,
        } => {
            let item = state
                .items
                .get_mut(item_id)
                .ok_or_else(|| PoolError::NotFound(item_id.clone()))?;
            if !item.state.can_transition_to(*to) {
                return Err(PoolError::StateConflict {
                    id: item_id.clone(),
                    from: item.state,
                    to: *to,
                });
            }
            item.state = *to;
            item.state_history.push(StateChange {
                state: *to,
                at,
                provenance: *provenance,
                iteration: *iteration,
            });
        }
        JournalEvent::LabelRecorded { item_id, vote } => {
            let item = state
                .items
                .get_mut(item_id)
                .ok_or_else(|| PoolError::NotFound(item_id.clone()))?;
            if item.state != ItemState::InFlight {
                return Err(PoolError::InvalidArgument(format!(
                    "vote on item {item_id} in state {}",
                    item.state
                )));
            }
            item.votes.push(vote.clone());
        }
        JournalEvent::SubmissionGraded(graded) => state.quality.apply(graded)?,
        JournalEvent::IterationStarted { category, ticket } => {
            let run = state.runs.entry(category.clone()).or_default();
            if run.open.is_some() {
                return Err(PoolError::InvalidArgument(format!(
                    "iteration already open for {category}"
                )));
            }
            if run.finished {
                return Err(PoolError::InvalidArgument(format!("cascade for {category} is finished")));
            }
            run.open = Some(ticket.clone());
        }
        JournalEvent::IterationCompleted {
            category,
            report,
            carried,
        } => {
            let run = state.runs.entry(category.clone()).or_default();
            match &run.open {
                Some(t) if t.iteration == report.iteration => {}
                _ => {
                    return Err(PoolError::InvalidArgument(format!(
                        "no open iteration {} for {category}",
                        report.iteration
                    )))
                }
            }
            run.open = None;
            run.finished = report.terminal;
            run.reports.push(report.clone());
            run.carried = carried.clone();
        }
        JournalEvent::AuditRecorded { category, audit } => {
            state
                .runs
                .entry(category.clone())
                .or_default()
                .audits
                .push(*audit);
        }
    }
    Ok(())
}
