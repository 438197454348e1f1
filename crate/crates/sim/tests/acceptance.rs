//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use labelamp::cascade::{compute_lower_threshold, compute_upper_threshold, IterationReport};
use labelamp::crowd::{
    assemble_hit, grade_hidden, grade_online, redact_for_client, GoldPools, HitAssignment, HitSpec,
    ItemRef, SlotKind, HIT_SLOTS,
};
use labelamp::pool::PoolStore;
use labelamp::scorer::{
    log_loss_and_gradient, stable_learning_rate, train_reference_traced, LabeledExample,
    TrainConfig,
};
use labelamp::{Answer, HitId, ItemId, Label, ManualClock, WorkerId};
use labelamp_sim::{gen_gold, gen_pool, run_simulation, SimConfig, SimRun};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn scenario_a() -> SimConfig {
    let mut cfg = SimConfig {
        pool_size: 200_000,
        prevalence: 0.3,
        spammer_fraction: 0.1,
        seed: 42,
        ..SimConfig::default()
    };
    cfg.flip_prob.min = 0.05;
    cfg.flip_prob.max = 0.05;
    cfg.cascade.batch_size = 4_000;
    cfg.cascade.test_size = 1_000;
    cfg.cascade.val_size = 500;
    cfg
}

fn scenario_b() -> SimConfig {
    let mut cfg = scenario_a();
    cfg.skill.s0 = 0.0;
    cfg.skill.k = 0.0;
    cfg
}

struct Timed {
    run: SimRun,
    elapsed: Duration,
}

fn timed(cfg: &SimConfig) -> Timed {
    let start = Instant::now();
    let run = run_simulation(cfg).expect("simulation runs");
    Timed {
        run,
        elapsed: start.elapsed(),
    }
}

static RUN_A: OnceLock<Timed> = OnceLock::new();
static RUN_B: OnceLock<Timed> = OnceLock::new();

fn run_a() -> &'static Timed {
    RUN_A.get_or_init(|| timed(&scenario_a()))
}

fn run_b() -> &'static Timed {
    RUN_B.get_or_init(|| timed(&scenario_b()))
}

// Exhaustive sweeps over every observed score, with the precision target and
// loss budget as integer percentages so the oracle has no float rounding.
fn sweep_upper(scored: &[(f64, Label)], target_pct: usize) -> Option<f64> {
    let mut cuts: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.into_iter().find(|&t| {
        let above: Vec<_> = scored.iter().filter(|(s, _)| *s >= t).collect();
        let pos = above.iter().filter(|(_, l)| l.is_positive()).count();
        100 * pos >= target_pct * above.len()
    })
}

fn sweep_lower(scored: &[(f64, Label)], budget_pct: usize, min_pos: usize) -> Option<f64> {
    let p = scored.iter().filter(|(_, l)| l.is_positive()).count();
    if p < min_pos {
        return None;
    }
    let allowance = p * budget_pct / 100;
    let mut cuts: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.into_iter().rev().find(|&t| {
        scored.iter().filter(|(s, l)| l.is_positive() && *s < t).count() <= allowance
    })
}

fn threshold_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1_000 {
        let n = rng.random_range(1..=12);
        // a coarse score grid forces ties
        let scored: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                let s = f64::from(rng.random_range(0..8u8)) / 7.0;
                let l = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
                (s, l)
            })
            .collect();
        let target_pct = *[50usize, 80, 95, 100].choose(&mut rng).unwrap();
        let budget_pct = *[0usize, 1, 10, 25, 50].choose(&mut rng).unwrap();
        let min_pos = rng.random_range(0..4);
        let upper = compute_upper_threshold(&scored, target_pct as f64 / 100.0).map_err(|e| e.to_string())?;
        let lower = compute_lower_threshold(&scored, budget_pct as f64 / 100.0, min_pos)
            .map_err(|e| e.to_string())?;
        if upper != sweep_upper(&scored, target_pct) || lower != sweep_lower(&scored, budget_pct, min_pos) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances, 0 mismatches, {elapsed:.2?}"))
}

fn recount(name: &str, run: &SimRun, cfg: &SimConfig) -> Result<usize, String> {
    ensure(
        cfg.cascade.precision_target == 0.95 && cfg.cascade.loss_budget == 0.01,
        || "scenario uses non-default targets".into(),
    )?;
    let mut checked = 0;
    for ((iteration, scored), report) in run.scored_tests.iter().zip(&run.result.reports) {
        if scored.is_empty() {
            continue;
        }
        checked += 1;
        let p = scored.iter().filter(|(_, l)| l.is_positive()).count();
        if let Some(u) = report.thresholds.upper {
            let above = scored.iter().filter(|(s, _)| *s >= u).count();
            let pos = scored.iter().filter(|(s, l)| *s >= u && l.is_positive()).count();
            ensure(100 * pos >= 95 * above, || {
                format!("{name} iteration {iteration}: precision {pos}/{above} above upper cut")
            })?;
        }
        if let Some(l) = report.thresholds.lower {
            let lost = scored.iter().filter(|(s, t)| *s < l && t.is_positive()).count();
            ensure(lost <= p / 100, || {
                format!("{name} iteration {iteration}: {lost} of {p} positives below lower cut")
            })?;
        }
    }
    Ok(checked)
}

fn construction_guarantees() -> Outcome {
    let a = recount("A", &run_a().run, &scenario_a())?;
    let b = recount("B", &run_b().run, &scenario_b())?;
    let mut small = scenario_a();
    small.pool_size = 30_000;
    let mut total = a + b;
    for seed in 1..=3 {
        small.seed = seed;
        let run = run_simulation(&small).map_err(|e| e.to_string())?;
        total += recount(&format!("small seed {seed}"), &run, &small)?;
    }
    Ok(format!("{total} scored test splits recounted across 5 runs"))
}

fn grading_boundaries() -> Outcome {
    let cfg = SimConfig::default();
    let gold = gen_gold(&cfg, 1);
    let spec = hit(&gold, 0, 7);
    for wrong in 0..=20usize {
        let correct = 20 - wrong;
        let (mut ow, mut hw) = (0, 0);
        let answers = spec
            .slots
            .iter()
            .map(|s| match s.kind {
                SlotKind::Target => Answer::No,
                SlotKind::Tutorial => s.truth.unwrap(),
                SlotKind::Online => {
                    ow += 1;
                    if ow <= wrong { s.truth.unwrap().flipped() } else { s.truth.unwrap() }
                }
                SlotKind::Hidden => {
                    hw += 1;
                    if hw <= wrong { s.truth.unwrap().flipped() } else { s.truth.unwrap() }
                }
            })
            .collect();
        let a = HitAssignment {
            hit_id: spec.hit_id.clone(),
            worker_id: WorkerId::from("w"),
            answers,
            submitted_at: 0,
            online_pass: false,
            hidden_pass: false,
        };
        let online = grade_online(&a, &spec);
        let hidden = grade_hidden(&a, &spec);
        ensure(online.correct == correct && online.passed == (correct >= 18), || {
            format!("online {correct}/20 graded {online:?}")
        })?;
        ensure(hidden.correct == correct && hidden.passed == (correct >= 17), || {
            format!("hidden {correct}/20 graded {hidden:?}")
        })?;
    }
    Ok("counts 0..=20: online passes from 18, hidden from 17".into())
}

fn targets(offset: usize) -> Vec<ItemRef> {
    (0..150)
        .map(|i| {
            let id = labelamp::pool::id_from_url(&format!("target/{}", offset + i));
            ItemRef {
                url: format!("http://img.example/{id}.jpg"),
                item_id: id,
            }
        })
        .collect()
}

fn hit(gold: &GoldPools, offset: usize, seed: u64) -> HitSpec {
    assemble_hit(
        HitId::new(format!("synthetic-1-{seed}")),
        "synthetic",
        targets(offset),
        gold,
        &BTreeSet::new(),
        seed,
    )
    .expect("hit assembles")
}

fn slot_shape(v: &serde_json::Value) -> Result<(Vec<String>, bool), String> {
    let obj = v.as_object().ok_or("slot is not an object")?;
    let keys = obj.keys().cloned().collect();
    let url = obj["url"].as_str().ok_or("url not a string")?;
    let id = obj["item_id"].as_str().ok_or("item_id not a string")?;
    let plain = obj["tutorial"].is_null()
        && obj["check"].is_null()
        && url == format!("http://img.example/{id}.jpg")
        && id.len() == 16
        && id.bytes().all(|b| b.is_ascii_hexdigit());
    Ok((keys, plain))
}

fn hit_composition() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let gold = gen_gold(&cfg, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in 0..10_000 {
        let seed: u64 = rng.random();
        let spec = hit(&gold, rng.random_range(0..1_000_000), seed);
        let count = |k| spec.slots.iter().filter(|s| s.kind == k).count();
        ensure(
            spec.slots.len() == HIT_SLOTS
                && count(SlotKind::Target) == 150
                && count(SlotKind::Tutorial) == 15
                && count(SlotKind::Online) == 20
                && count(SlotKind::Hidden) == 20,
            || format!("hit {n} (seed {seed}) has the wrong composition"),
        )?;
        let distinct: BTreeSet<&ItemId> = spec.slots.iter().map(|s| &s.item.item_id).collect();
        ensure(distinct.len() == HIT_SLOTS, || format!("hit {n} repeats an item"))?;

        let payload = redact_for_client(&spec, "a synthetic object");
        let text = serde_json::to_string(&payload).map_err(|e| e.to_string())?;
        ensure(!text.to_lowercase().contains("hidden"), || format!("hit {n} payload names hidden slots"))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let slots = value["slots"].as_array().ok_or("no slots array")?;
        let mut reference = None;
        for (i, (v, s)) in slots.iter().zip(&spec.slots).enumerate() {
            let (keys, plain) = slot_shape(v)?;
            ensure(v["position"] == i + 1, || format!("hit {n} slot {i} has the wrong position"))?;
            let reference = reference.get_or_insert_with(|| keys.clone());
            ensure(*reference == keys, || format!("hit {n} slot {i} key set differs"))?;
            let expect_plain = matches!(s.kind, SlotKind::Target | SlotKind::Hidden);
            ensure(plain == expect_plain, || {
                format!("hit {n} slot {i} ({:?}) distinguishable", s.kind)
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("10000 hits valid, hidden slots structurally identical to targets, {elapsed:.2?}"))
}

fn truth_precision(run: &SimRun) -> (usize, usize) {
    use labelamp::pool::ItemState::*;
    let mut set = 0;
    let mut correct = 0;
    for item in run.pool.items("synthetic") {
        if matches!(item.state, HumanPositive | AutoPositive) {
            set += 1;
            correct += usize::from(run.truths[&item.id].is_positive());
        }
    }
    (correct, set)
}

fn scenario_a_check() -> Outcome {
    let Timed { run, elapsed } = run_a();
    let (correct, set) = truth_precision(run);
    let precision = correct as f64 / set as f64;
    let positives = run.truths.values().filter(|l| l.is_positive()).count();
    let auto_rejected = run
        .pool
        .items("synthetic")
        .filter(|i| i.state == labelamp::pool::ItemState::AutoNegative && run.truths[&i.id].is_positive())
        .count();
    let resolved = run.pool.items("synthetic").filter(|i| i.state.is_terminal()).count();
    let human_items = run.pool.items("synthetic").filter(|i| !i.votes.is_empty()).count();
    let amplification = resolved as f64 / human_items as f64;
    let rejected_frac = auto_rejected as f64 / positives as f64;
    let summary = format!(
        "precision {precision:.4}, amplification {amplification:.2}, auto-rejected positives {:.2}%, {} iterations, {elapsed:.1?}",
        100.0 * rejected_frac,
        run.result.iterations_used
    );
    ensure(precision >= 0.85, || format!("precision too low: {summary}"))?;
    ensure(amplification >= 3.0, || format!("amplification too low: {summary}"))?;
    ensure(rejected_frac <= 0.05, || format!("too many positives auto-rejected: {summary}"))?;
    ensure(*elapsed < Duration::from_secs(120), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn scenario_b_check() -> Outcome {
    let Timed { run, elapsed } = run_b();
    let checked = recount("B", run, &scenario_b())?;
    let last: &IterationReport = run.result.reports.last().ok_or("no iterations")?;
    ensure(last.terminal && last.exhaustive, || format!("last iteration not exhaustive: {last:?}"))?;
    ensure(run.pool.items("synthetic").all(|i| i.state.is_terminal()), || "items left unresolved".into())?;
    let (correct, set) = truth_precision(run);
    let precision = correct as f64 / set as f64;
    let summary = format!(
        "{checked} splits within guarantees, exhaustive at iteration {}, precision {precision:.4}, {elapsed:.1?}",
        last.iteration
    );
    ensure(precision >= 0.9, || format!("precision too low: {summary}"))?;
    ensure(*elapsed < Duration::from_secs(180), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn spammer_rejection() -> Outcome {
    let stats = run_a().run.result.crowd;
    ensure(stats.spammer_submissions > 0, || "no spammer submissions observed".into())?;
    let rate = stats.spammer_accepted as f64 / stats.spammer_submissions as f64;
    let summary = format!(
        "{}/{} spammer submissions accepted ({:.1}%), {} workers blocked",
        stats.spammer_accepted,
        stats.spammer_submissions,
        100.0 * rate,
        stats.blocked_workers
    );
    ensure(rate < 0.05, || summary.clone())?;
    Ok(summary)
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<LabeledExample> {
    (0..n)
        .map(|i| LabeledExample {
            item_id: ItemId::new(format!("x{i}")),
            features: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label: match i {
                0 => Label::Positive,
                1 => Label::Negative,
                _ if rng.random_bool(0.5) => Label::Positive,
                _ => Label::Negative,
            },
        })
        .collect()
}

fn reference_scorer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data = random_set(&mut rng, 40, 5);
        let params: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let l2 = rng.random_range(0.0..0.1);
        let (_, grad) = log_loss_and_gradient(&params, &data, l2);
        let h = 1e-5;
        for j in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (log_loss_and_gradient(&plus, &data, l2).0 - log_loss_and_gradient(&minus, &data, l2).0)
                / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8));
        }
    }
    ensure(worst < 1e-5, || format!("max relative gradient error {worst:e}"))?;

    for _ in 0..100 {
        let n = rng.random_range(2..80);
        let dim = rng.random_range(1..=5);
        let data = random_set(&mut rng, n, dim);
        let l2 = rng.random_range(0.0..0.1);
        let cfg = TrainConfig {
            learning_rate: stable_learning_rate(&data, l2),
            epochs: 100,
            l2_lambda: l2,
            seed: 0,
        };
        let (_, trace) = train_reference_traced(&data, &cfg).map_err(|e| e.to_string())?;
        if let Some(w) = trace.windows(2).find(|w| w[1] > w[0] + 1e-12) {
            return Err(format!("loss rose from {} to {}", w[0], w[1]));
        }
    }
    Ok(format!("max relative gradient error {worst:.1e}; loss non-increasing on 100 training runs"))
}

fn determinism() -> Outcome {
    let first = &run_a().run;
    let second = run_simulation(&scenario_a()).map_err(|e| e.to_string())?;
    ensure(first.pool.export_state() == second.pool.export_state(), || "scenario A exports differ".into())?;
    ensure(first.result.to_json() == second.result.to_json(), || "scenario A reports differ".into())?;
    let mut small = scenario_b();
    small.pool_size = 20_000;
    small.seed = 9;
    let x = run_simulation(&small).map_err(|e| e.to_string())?;
    let y = run_simulation(&small).map_err(|e| e.to_string())?;
    ensure(x.pool.export_state() == y.pool.export_state(), || "small run exports differ".into())?;
    ensure(x.result.to_json() == y.result.to_json(), || "small run reports differ".into())?;
    let gen = |s| serde_json::to_string(&gen_pool(&small, s).items).unwrap();
    ensure(gen(3) == gen(3) && gen(3) != gen(4), || "pool generation is not seed-driven".into())?;
    Ok("equal seeds give byte-identical exports and reports (scenario A, small skill-0 run)".into())
}

fn journal_replay() -> Outcome {
    let run = &run_a().run;
    let records = run.pool.journal().to_vec();
    let n = records.len();
    let replayed = PoolStore::replay(records, Arc::new(ManualClock::new(0))).map_err(|e| e.to_string())?;
    ensure(replayed.export_state() == run.pool.export_state(), || "replayed state differs".into())?;
    ensure(replayed.export_labels("synthetic") == run.pool.export_labels("synthetic"), || {
        "replayed label export differs".into()
    })?;
    Ok(format!("{n} journal records replayed to a byte-identical export"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("threshold oracle equivalence", threshold_oracle),
        ("construction guarantees", construction_guarantees),
        ("grading boundaries", grading_boundaries),
        ("hit composition", hit_composition),
        ("scenario A (strong scorer)", scenario_a_check),
        ("scenario B (useless scorer)", scenario_b_check),
        ("spammer rejection", spammer_rejection),
        ("reference scorer", reference_scorer),
        ("determinism", determinism),
        ("journal replay", journal_replay),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
