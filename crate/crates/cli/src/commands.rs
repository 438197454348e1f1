//! Subcommand implementations. Each returns the text to print on success.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use labelamp::cascade::{
    precision_audit, CascadeEngine, CascadeFile, ExpertLabeler, HumanLabeler,
};
use labelamp::crowd::GoldPools;
use labelamp::pool::{CategoryKind, CategorySpec, IngestOptions, ItemState, PoolStore};
use labelamp::scorer::ReferenceFactory;
use labelamp::svc::{metrics, ServiceConfig, TaskService};
use labelamp::{ItemId, Label, SystemClock};
use labelamp_sim::{run_simulation, SimConfig};
use serde::{Deserialize, Serialize};

use crate::http::{advance, router, AppState, Driver};

fn clock() -> Arc<SystemClock> {
    Arc::new(SystemClock)
}

/// Opens a journal for appending, creating it if needed.
pub fn open_journal(path: &Path) -> Result<PoolStore> {
    PoolStore::open(path, clock()).with_context(|| format!("opening journal {}", path.display()))
}

/// Replays an existing journal without writing to it.
pub fn load_journal(path: &Path) -> Result<PoolStore> {
    let file = File::open(path).with_context(|| format!("opening journal {}", path.display()))?;
    PoolStore::replay_reader(BufReader::new(file), clock())
        .with_context(|| format!("replaying journal {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

pub fn parse_kind(s: &str) -> Result<CategoryKind> {
    match s {
        "object" => Ok(CategoryKind::Object),
        "scene" => Ok(CategoryKind::Scene),
        other => bail!("unknown category kind {other:?}, expected object or scene"),
    }
}

pub struct IngestArgs<'a> {
    pub manifest: &'a Path,
    pub category: &'a str,
    pub kind: CategoryKind,
    pub definition: Option<&'a str>,
    pub min_dim: u32,
    pub journal: &'a Path,
}

pub fn ingest(args: IngestArgs<'_>) -> Result<String> {
    let mut pool = open_journal(args.journal)?;
    if pool.category(args.category).is_none() {
        let mut spec = CategorySpec::new(args.category, args.kind);
        if let Some(text) = args.definition {
            spec = spec.with_definition(text);
        }
        pool.register_category(spec)?;
    }
    let file = File::open(args.manifest)
        .with_context(|| format!("opening manifest {}", args.manifest.display()))?;
    let opts = IngestOptions {
        min_dim: args.min_dim,
        default_category: Some(args.category.to_owned()),
        ..IngestOptions::default()
    };
    let report = pool.ingest_manifest(BufReader::new(file), &opts)?;
    pool.flush()?;
    Ok(pretty(&report))
}

#[derive(Debug, Clone, Deserialize)]
struct ExpertRow {
    #[serde(alias = "id")]
    item_id: ItemId,
    label: Label,
}

/// Reads `{"item_id": ..., "label": "positive"|"negative"}` lines.
pub fn read_expert_labels(path: &Path) -> Result<BTreeMap<ItemId, Label>> {
    let file = File::open(path).with_context(|| format!("opening label file {}", path.display()))?;
    let mut labels = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ExpertRow = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad label row", path.display(), n + 1))?;
        labels.insert(row.item_id, row.label);
    }
    Ok(labels)
}

fn read_cascade_file(path: &Path) -> Result<CascadeFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CascadeFile::from_toml(&text)?)
}

fn factory(file: &CascadeFile) -> ReferenceFactory {
    ReferenceFactory::new(file.scorer.train).with_l2_grid(file.scorer.l2_grid.clone())
}

pub struct CascadeArgs<'a> {
    pub category: &'a str,
    pub config: &'a Path,
    pub journal: &'a Path,
    pub labels: Option<&'a Path>,
    /// Finish even if some targets were never labeled.
    pub force: bool,
}

/// Runs the cascade to completion, labeling from an expert file.
pub fn cascade_run(args: CascadeArgs<'_>) -> Result<String> {
    let Some(labels) = args.labels else {
        bail!("cascade run needs --labels; use `serve --drive` to label with workers");
    };
    let file = read_cascade_file(args.config)?;
    let engine = CascadeEngine::new(args.category, file.cascade.clone())?;
    let mut pool = open_journal(args.journal)?;
    let mut expert = ExpertLabeler::new(read_expert_labels(labels)?);
    let mut factory = factory(&file);
    let mut out = String::new();
    while !engine.is_finished(&pool) {
        let outcome = engine.run_iteration(&mut pool, &mut factory, &mut expert);
        pool.flush()?;
        let outcome = outcome?;
        out.push_str(&serde_json::to_string(&outcome.report)?);
        out.push('\n');
    }
    Ok(out)
}

/// One step: opens an iteration if none is open, otherwise labels it from
/// `--labels` (if given) and finishes it.
pub fn cascade_step(args: CascadeArgs<'_>) -> Result<String> {
    let file = read_cascade_file(args.config)?;
    let engine = CascadeEngine::new(args.category, file.cascade.clone())?;
    let mut pool = open_journal(args.journal)?;
    let Some(ticket) = engine.open_ticket(&pool).cloned() else {
        let ticket = engine.begin_iteration(&mut pool)?;
        pool.flush()?;
        return Ok(pretty(&serde_json::json!({
            "opened": ticket.iteration,
            "exhaustive": ticket.exhaustive,
            "targets": ticket.target_count(),
        })));
    };
    if let Some(labels) = args.labels {
        ExpertLabeler::new(read_expert_labels(labels)?).label(&mut pool, args.category, &ticket)?;
    }
    let untouched = ticket
        .targets()
        .filter(|id| {
            pool.item(id)
                .is_some_and(|i| !i.state_history.iter().any(|c| c.iteration == ticket.iteration))
        })
        .count();
    if untouched > 0 && !args.force {
        bail!(
            "{untouched} of {} targets of iteration {} were never labeled; label them or pass --force",
            ticket.target_count(),
            ticket.iteration
        );
    }
    let outcome = engine.finish_iteration(&mut pool, &mut factory(&file));
    pool.flush()?;
    Ok(pretty(&outcome?.report))
}

pub struct SimulateArgs<'a> {
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

/// Writes `result.json`, `reports.jsonl`, `labels.jsonl` and `journal.jsonl` to `out`.
pub fn simulate(args: SimulateArgs<'_>) -> Result<String> {
    let mut cfg = match args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_toml(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let run = run_simulation(&cfg)?;
    fs::create_dir_all(args.out)?;
    let mut reports = String::new();
    for r in &run.result.reports {
        reports.push_str(&serde_json::to_string(r)?);
        reports.push('\n');
    }
    let mut journal = String::new();
    for record in run.pool.journal() {
        journal.push_str(&record.to_line());
        journal.push('\n');
    }
    fs::write(args.out.join("result.json"), run.result.to_json() + "\n")?;
    fs::write(args.out.join("reports.jsonl"), reports)?;
    fs::write(args.out.join("labels.jsonl"), run.pool.export_labels(&cfg.category))?;
    fs::write(args.out.join("journal.jsonl"), journal)?;
    let r = &run.result;
    Ok(format!(
        "iterations: {}\nprecision: {}\nrecall: {}\namplification: {}\nauto-rejected positives: {:.4}\nwritten to {}",
        r.iterations_used,
        r.final_precision.map_or("n/a".into(), |p| format!("{p:.4}")),
        r.final_recall.map_or("n/a".into(), |p| format!("{p:.4}")),
        r.amplification.map_or("n/a".into(), |a| format!("{a:.2}")),
        r.auto_rejected_positive_fraction,
        args.out.display()
    ))
}

pub struct AuditArgs<'a> {
    pub category: &'a str,
    pub sample_n: usize,
    pub expert_file: &'a Path,
    pub journal: &'a Path,
    pub seed: u64,
}

/// Samples the positive set, checks it against expert labels and journals the result.
pub fn audit(args: AuditArgs<'_>) -> Result<String> {
    let mut pool = open_journal(args.journal)?;
    if pool.category(args.category).is_none() {
        bail!("unknown category {:?}", args.category);
    }
    let positives: Vec<ItemId> = pool
        .items(args.category)
        .filter(|i| matches!(i.state, ItemState::HumanPositive | ItemState::AutoPositive))
        .map(|i| i.id.clone())
        .collect();
    if positives.len() < args.sample_n {
        bail!("positive set has {} items, fewer than --sample-n {}", positives.len(), args.sample_n);
    }
    let labels = read_expert_labels(args.expert_file)?;
    let audit = precision_audit(&positives, args.sample_n, &labels, args.seed)?;
    pool.record_audit(args.category, audit)?;
    pool.flush()?;
    Ok(pretty(&audit))
}

pub fn stats(category: &str, journal: &Path) -> Result<String> {
    let pool = load_journal(journal)?;
    let report = metrics(&pool, category).map_err(|e| anyhow::anyhow!(e.message))?;
    Ok(pretty(&report))
}

pub fn export(category: &str, journal: &Path, out: &Path) -> Result<String> {
    let pool = load_journal(journal)?;
    if pool.category(category).is_none() {
        bail!("unknown category {category:?}");
    }
    let text = pool.export_labels(category);
    let rows = text.lines().count();
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(format!("{rows} labels written to {}", out.display()))
}

pub struct ServeArgs<'a> {
    pub addr: std::net::SocketAddr,
    pub journal: &'a Path,
    pub gold: &'a [(String, std::path::PathBuf)],
    pub service_config: Option<&'a Path>,
    pub drive: Option<(&'a str, &'a Path)>,
    pub seed: Option<u64>,
}

/// Builds the server state: journal, gold pools and optional cascade driver.
pub fn serve_state(args: &ServeArgs<'_>) -> Result<AppState> {
    let mut cfg = match args.service_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ServiceConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ServiceConfig::default(),
    };
    // session tokens come from this seed, so never use a fixed default
    cfg.seed = args.seed.unwrap_or_else(rand::random);
    let mut pool = open_journal(args.journal)?;
    let mut service = TaskService::new(cfg).map_err(|e| anyhow::anyhow!(e.message))?;
    for (category, path) in args.gold {
        let file = File::open(path).with_context(|| format!("opening gold file {}", path.display()))?;
        let pools = GoldPools::read(BufReader::new(file))?;
        service
            .set_gold(&pool, category, pools)
            .map_err(|e| anyhow::anyhow!("gold for {category}: {}", e.message))?;
    }
    let mut driver = match args.drive {
        Some((category, config)) => {
            let file = read_cascade_file(config)?;
            Some(Driver {
                engine: CascadeEngine::new(category, file.cascade.clone())?,
                factory: factory(&file),
            })
        }
        None => None,
    };
    if let Some(d) = driver.as_mut() {
        advance(&mut pool, &mut service, d);
        pool.flush()?;
    }
    Ok(AppState {
        pool,
        service,
        driver,
    })
}

pub async fn serve(args: ServeArgs<'_>) -> Result<()> {
    let state = serve_state(&args)?;
    let app = router(Arc::new(Mutex::new(state)));
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
