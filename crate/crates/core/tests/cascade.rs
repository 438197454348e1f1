use std::collections::BTreeMap;
use std::sync::Arc;

use labelamp::cascade::{
    amplification_ratio, audit_from_counts, precision_audit, wilson_interval, CascadeConfig,
    CascadeEngine, CascadeError, EffortLedger, ExpertLabeler, Z_95,
};
use labelamp::pool::{CategoryKind, CategorySpec, IngestOptions, ItemState, ManifestRow, PoolStore};
use labelamp::scorer::{ReferenceFactory, TrainConfig};
use labelamp::{ItemId, Label, ManualClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool_with_truth(n: usize, seed: u64) -> (PoolStore, BTreeMap<ItemId, Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = PoolStore::new(Arc::new(ManualClock::new(0)));
    pool.register_category(CategorySpec::new("bridge", CategoryKind::Object)).unwrap();
    let mut truth = BTreeMap::new();
    let rows: Vec<ManifestRow> = (0..n)
        .map(|i| {
            let positive = rng.random_bool(0.3);
            let x: f64 = rng.random_range(-1.0..1.0) + if positive { 1.5 } else { -1.5 };
            let id = format!("b{i:05}");
            truth.insert(ItemId::new(id.clone()), if positive { Label::Positive } else { Label::Negative });
            ManifestRow {
                id: Some(id),
                url: format!("http://img/{i}"),
                width: 640,
                height: 480,
                category: Some("bridge".into()),
                features: Some(vec![x, rng.random_range(-1.0..1.0)]),
            }
        })
        .collect();
    pool.ingest_rows(rows, &IngestOptions::default()).unwrap();
    (pool, truth)
}

fn config() -> CascadeConfig {
    CascadeConfig {
        batch_size: 600,
        test_size: 200,
        val_size: 100,
        exhaustive_limit: 300,
        seed: 5,
        ..CascadeConfig::default()
    }
}

#[test]
fn full_run_reconciles_and_honors_guarantees() {
    let (mut pool, truth) = pool_with_truth(6000, 1);
    let engine = CascadeEngine::new("bridge", config()).unwrap();
    let mut factory = ReferenceFactory::new(TrainConfig::default()).with_l2_grid(vec![0.0, 1e-2]);
    let mut expert = ExpertLabeler::new(truth.clone());
    let outcomes = engine.run(&mut pool, &mut factory, &mut expert).unwrap();
    assert!(engine.is_finished(&pool));
    assert!(outcomes.last().unwrap().report.terminal);

    let mut last_unlabeled = usize::MAX;
    for o in &outcomes {
        let r = &o.report;
        assert!(r.reconciles(), "{r:?}");
        assert!(r.unlabeled_after <= last_unlabeled);
        last_unlabeled = r.unlabeled_after;
        if let Some(u) = r.thresholds.upper {
            let above: Vec<_> = o.scored_test.iter().filter(|(s, _)| *s >= u).collect();
            let pos = above.iter().filter(|(_, l)| l.is_positive()).count();
            assert!(pos as f64 / above.len() as f64 >= 0.95);
        }
        if let Some(l) = r.thresholds.lower {
            let p = o.scored_test.iter().filter(|(_, t)| t.is_positive()).count();
            let lost = o.scored_test.iter().filter(|(s, t)| t.is_positive() && *s < l).count();
            assert!(lost <= (0.01 * p as f64 + 1e-9).floor() as usize);
        }
    }
    // a separable pool should be mostly auto-resolved
    assert!(outcomes[0].report.auto_positive + outcomes[0].report.auto_negative > 1000);

    let counts = pool.counts("bridge");
    assert_eq!(counts.get(ItemState::Unlabeled), 0);
    assert_eq!(counts.get(ItemState::InFlight), 0);
    assert_eq!(counts.resolved(), 6000);
    let ratio = amplification_ratio(&EffortLedger::from_pool(&pool, "bridge")).unwrap();
    assert!(ratio.ratio > 2.0, "{ratio:?}");
    for item in pool.items("bridge") {
        assert!(item.history_is_sound());
    }

    // replay gives the same bytes
    let replayed = PoolStore::replay(pool.journal().to_vec(), pool.clock()).unwrap();
    assert_eq!(replayed.export_state(), pool.export_state());
}

#[test]
fn single_class_sample_degrades_to_humans_only() {
    let (mut pool, truth) = pool_with_truth(2000, 2);
    let all_negative: BTreeMap<_, _> = truth.keys().map(|k| (k.clone(), Label::Negative)).collect();
    let engine = CascadeEngine::new("bridge", config()).unwrap();
    let mut factory = ReferenceFactory::new(TrainConfig::default());
    let out = engine
        .run_iteration(&mut pool, &mut factory, &mut ExpertLabeler::new(all_negative))
        .unwrap();
    assert!(out.report.thresholds.upper.is_none() && out.report.thresholds.lower.is_none());
    assert_eq!(out.report.auto_positive + out.report.auto_negative, 0);
    assert!(!out.report.warnings.is_empty());
    assert_eq!(out.report.carried_forward, 600);
    assert_eq!(pool.run("bridge").unwrap().carried.len(), 600);
}

#[test]
fn iteration_lifecycle_errors() {
    let (mut pool, truth) = pool_with_truth(2000, 3);
    let engine = CascadeEngine::new("bridge", config()).unwrap();
    let mut factory = ReferenceFactory::new(TrainConfig::default());
    assert!(matches!(engine.finish_iteration(&mut pool, &mut factory), Err(CascadeError::NoOpenIteration)));
    let ticket = engine.begin_iteration(&mut pool).unwrap();
    assert_eq!((ticket.test.len(), ticket.val.len(), ticket.train.len()), (200, 100, 300));
    assert!(matches!(engine.begin_iteration(&mut pool), Err(CascadeError::IterationOpen)));
    pool.transition(&ticket.train[0], ItemState::InFlight, labelamp::pool::Provenance::Human, 1).unwrap();
    assert!(matches!(engine.finish_iteration(&mut pool, &mut factory), Err(CascadeError::StillLabeling(1))));
    pool.transition(&ticket.train[0], ItemState::Unlabeled, labelamp::pool::Provenance::Human, 1).unwrap();
    // resume the open ticket with labels
    let out = engine
        .run_iteration(&mut pool, &mut factory, &mut ExpertLabeler::new(truth))
        .unwrap();
    assert_eq!(out.report.iteration, 1);
    assert!(CascadeEngine::new("bridge", CascadeConfig { test_size: 600, ..config() }).is_err());
}

#[test]
fn wilson_and_audit() {
    let (lo, hi) = wilson_interval(1800, 2000, Z_95);
    assert!((lo - 0.886).abs() < 5e-4 && (hi - 0.912).abs() < 5e-4, "{lo} {hi}");
    let all = audit_from_counts(50, 50);
    assert_eq!(all.precision, 1.0);
    assert_eq!(all.wilson_high, 1.0);
    let ids: Vec<ItemId> = (0..10).map(|i| ItemId::new(format!("p{i}"))).collect();
    let labels: BTreeMap<_, _> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i < 8 { Label::Positive } else { Label::Negative }))
        .collect();
    let a = precision_audit(&ids, 10, &labels, 1).unwrap();
    assert_eq!(a.confirmed_positive, 8);
    assert!(a.wilson_low <= a.precision && a.precision <= a.wilson_high);
    assert!(precision_audit(&ids, 0, &labels, 1).is_err());
    assert!(precision_audit(&ids, 11, &labels, 1).is_err());
}
