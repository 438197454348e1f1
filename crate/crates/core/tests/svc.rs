use std::collections::BTreeSet;
use std::sync::Arc;

use labelamp::cascade::{CascadeConfig, CascadeEngine};
use labelamp::crowd::{
    ClientPayload, ConflictRule, ConsensusPolicy, GoldItem, GoldPools, GoldRole, HIT_SLOTS,
};
use labelamp::pool::{CategoryKind, CategorySpec, IngestOptions, ItemState, ManifestRow, PoolStore};
use labelamp::svc::{metrics, ErrorCode, ServiceConfig, TaskService};
use labelamp::{Answer, ItemId, ManualClock, WorkerId};

struct World {
    clock: Arc<ManualClock>,
    pool: PoolStore,
    svc: TaskService,
    gold: GoldPools,
}

fn gold() -> GoldPools {
    let mk = |prefix: &str, i: usize, role: GoldRole| GoldItem {
        item_id: ItemId::new(format!("{prefix}{i:03}")),
        url: Some(format!("http://img/g{prefix}{i}.jpg")),
        truth: Answer::from_bool(i.is_multiple_of(2)),
        role,
        explanation: (role == GoldRole::Tutorial).then(|| "see the stove".to_owned()),
    };
    GoldPools::from_items(
        (0..40)
            .map(|i| mk("ga", i, GoldRole::Tutorial))
            .chain((0..80).map(|i| mk("gb", i, GoldRole::Online)))
            .chain((0..80).map(|i| mk("gc", i, GoldRole::Hidden))),
    )
    .unwrap()
}

fn world(targets: usize, consensus: ConsensusPolicy) -> World {
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let mut pool = PoolStore::new(clock.clone());
    pool.register_category(CategorySpec::new("kitchen", CategoryKind::Scene).with_definition("a room for cooking"))
        .unwrap();
    pool.ingest_rows(
        (0..1000).map(|i| ManifestRow {
            id: Some(format!("it{i:04}")),
            url: format!("http://img/{i}.jpg"),
            width: 500,
            height: 500,
            category: Some("kitchen".into()),
            features: Some(vec![i as f64 / 1000.0]),
        }),
        &IngestOptions::default(),
    )
    .unwrap();
    let cfg = CascadeConfig {
        batch_size: targets,
        test_size: targets / 5,
        val_size: targets / 10,
        exhaustive_limit: 10,
        ..CascadeConfig::default()
    };
    CascadeEngine::new("kitchen", cfg).unwrap().begin_iteration(&mut pool).unwrap();
    let mut svc = TaskService::new(ServiceConfig {
        consensus,
        ..ServiceConfig::default()
    })
    .unwrap();
    let gold = gold();
    svc.set_gold(&pool, "kitchen", gold.clone()).unwrap();
    World { clock, pool, svc, gold }
}

impl World {
    fn login(&mut self, w: &str) -> String {
        self.svc.create_session(&self.pool, &WorkerId::from(w)).unwrap().token
    }

    fn truth(&self, id: &ItemId) -> Option<Answer> {
        self.gold.all().find(|g| &g.item_id == id).map(|g| g.truth)
    }

    /// Answers gold correctly (minus `hidden_wrong` hidden slots) and every
    /// target with `target`.
    fn answers(&self, p: &ClientPayload, target: Answer, hidden_wrong: usize) -> Vec<Answer> {
        let spec = self.svc.hit_spec(&p.hit_id).unwrap();
        let mut wrong = 0;
        spec.slots
            .iter()
            .map(|s| match s.truth {
                None => target,
                Some(t) if s.kind == labelamp::crowd::SlotKind::Hidden && wrong < hidden_wrong => {
                    wrong += 1;
                    t.flipped()
                }
                Some(t) => t,
            })
            .collect()
    }
}

fn real_targets(w: &World, p: &ClientPayload) -> Vec<ItemId> {
    p.slots
        .iter()
        .filter(|s| s.tutorial.is_none() && s.check.is_none() && w.truth(&s.item_id).is_none())
        .map(|s| s.item_id.clone())
        .collect()
}

#[test]
fn redundancy_and_consensus() {
    let mut w = world(300, ConsensusPolicy::default());
    let (t1, t2, t3) = (w.login("w1"), w.login("w2"), w.login("w3"));
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    let b = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    assert_ne!(a.hit_id, b.hit_id, "same worker gets a different hit the second time");
    let a2 = w.svc.next_hit(&mut w.pool, &t2, "kitchen").unwrap();
    assert_eq!(a2.hit_id, a.hit_id, "second worker gets the other seat of the first hit");
    assert_eq!(a2, a);
    let b2 = w.svc.next_hit(&mut w.pool, &t3, "kitchen").unwrap();
    assert_eq!(b2.hit_id, b.hit_id);
    let err = w.svc.next_hit(&mut w.pool, &t3, "kitchen").unwrap_err();
    assert_eq!(err.code, ErrorCode::NoWork);
    assert!(err.retryable);

    assert_eq!(a.slots.len(), HIT_SLOTS);
    let targets = real_targets(&w, &a);
    assert_eq!(targets.len(), 150);
    assert!(targets.iter().all(|id| w.pool.item(id).unwrap().state == ItemState::InFlight));

    let ans = w.answers(&a, Answer::Yes, 0);
    let r = w.svc.submit(&mut w.pool, &t1, &a.hit_id, ans.clone()).unwrap();
    assert_eq!(r.labels_recorded, 150);
    // one accepted seat: nothing resolved yet
    assert!(targets.iter().all(|id| w.pool.item(id).unwrap().state == ItemState::InFlight));
    let dup = w.svc.submit(&mut w.pool, &t1, &a.hit_id, ans.clone()).unwrap_err();
    assert_eq!(dup.code, ErrorCode::Conflict);
    w.svc.submit(&mut w.pool, &t2, &a.hit_id, ans).unwrap();
    assert!(targets
        .iter()
        .all(|id| w.pool.item(id).unwrap().state == ItemState::HumanPositive));
    for id in &targets {
        let voters: BTreeSet<_> = w.pool.item(id).unwrap().votes.iter().map(|v| v.worker_id.clone()).collect();
        assert_eq!(voters.len(), 2);
    }
}

#[test]
fn conflicts_get_a_third_label_from_someone_new() {
    let mut w = world(150, ConsensusPolicy::default());
    let (t1, t2, t3, t4) = (w.login("w1"), w.login("w2"), w.login("w3"), w.login("w4"));
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    w.svc.next_hit(&mut w.pool, &t2, "kitchen").unwrap();
    let yes = w.answers(&a, Answer::Yes, 0);
    let no = w.answers(&a, Answer::No, 0);
    w.svc.submit(&mut w.pool, &t1, &a.hit_id, yes).unwrap();
    w.svc.submit(&mut w.pool, &t2, &a.hit_id, no).unwrap();
    let targets = real_targets(&w, &a);
    assert!(targets.iter().all(|id| w.pool.item(id).unwrap().state == ItemState::Unlabeled));
    assert_eq!(w.svc.pending("kitchen"), 150);

    // the two voters are not offered these items again
    assert_eq!(w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap_err().code, ErrorCode::NoWork);
    assert_eq!(w.svc.next_hit(&mut w.pool, &t2, "kitchen").unwrap_err().code, ErrorCode::NoWork);
    let c = w.svc.next_hit(&mut w.pool, &t3, "kitchen").unwrap();
    assert_ne!(c.hit_id, a.hit_id);
    let c2 = w.svc.next_hit(&mut w.pool, &t4, "kitchen").unwrap();
    assert_eq!(c2.hit_id, c.hit_id);
    let yes = w.answers(&c, Answer::Yes, 0);
    let no = w.answers(&c, Answer::No, 0);
    w.svc.submit(&mut w.pool, &t3, &c.hit_id, yes).unwrap();
    w.svc.submit(&mut w.pool, &t4, &c.hit_id, no).unwrap();
    // first three distinct workers were yes, no, yes
    assert!(targets
        .iter()
        .all(|id| w.pool.item(id).unwrap().state == ItemState::HumanPositive));
    assert!(w.svc.is_drained(&mut w.pool, "kitchen").unwrap());
}

#[test]
fn discard_mode_leaves_conflicts_unlabeled() {
    let policy = ConsensusPolicy {
        conflict_rule: ConflictRule::DiscardConflicts,
        ..ConsensusPolicy::default()
    };
    let mut w = world(150, policy);
    let (t1, t2) = (w.login("w1"), w.login("w2"));
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    w.svc.next_hit(&mut w.pool, &t2, "kitchen").unwrap();
    let yes = w.answers(&a, Answer::Yes, 0);
    let no = w.answers(&a, Answer::No, 0);
    w.svc.submit(&mut w.pool, &t1, &a.hit_id, yes).unwrap();
    w.svc.submit(&mut w.pool, &t2, &a.hit_id, no).unwrap();
    assert_eq!(w.svc.pending("kitchen"), 0);
    assert!(w.svc.is_drained(&mut w.pool, "kitchen").unwrap());
}

#[test]
fn rejections_and_their_bodies() {
    let mut w = world(150, ConsensusPolicy::default());
    let t1 = w.login("w1");
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();

    let err = w.svc.submit(&mut w.pool, &t1, &a.hit_id, vec![Answer::No; 204]).unwrap_err();
    assert_eq!(err.code, ErrorCode::MalformedSubmission);

    let mut ans = w.answers(&a, Answer::Yes, 0);
    let online: Vec<usize> = a.slots.iter().filter(|s| s.check.is_some()).map(|s| s.position - 1).collect();
    for &i in &online[..3] {
        ans[i] = ans[i].flipped();
    }
    let err = w.svc.submit(&mut w.pool, &t1, &a.hit_id, ans).unwrap_err();
    assert_eq!(err.code, ErrorCode::OnlineCheckFailed);
    assert!(err.retryable);

    let spec = w.svc.hit_spec(&a.hit_id).unwrap().clone();
    let hidden_ids: Vec<String> = spec
        .slots
        .iter()
        .filter(|s| s.kind == labelamp::crowd::SlotKind::Hidden)
        .map(|s| s.item.item_id.to_string())
        .collect();
    let cheat = w.answers(&a, Answer::Yes, 4);
    let err = w.svc.submit(&mut w.pool, &t1, &a.hit_id, cheat).unwrap_err();
    assert_eq!(err.code, ErrorCode::QualityCheckFailed);
    assert!(!err.retryable);
    let body = serde_json::to_string(&err).unwrap();
    assert!(hidden_ids.iter().all(|id| !body.contains(id.as_str())));
    assert!(!body.chars().any(|c| c.is_ascii_digit()), "no counts or positions: {body}");

    // the hit had no other seat, so it dissolved and its targets went back
    assert_eq!(w.svc.open_hits("kitchen"), 0);
    assert_eq!(w.svc.pending("kitchen"), 150);
    assert!(w.pool.quality().is_blocked(&WorkerId::from("w1")));
    let err = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap_err();
    assert_eq!(err.code, ErrorCode::WorkerBlocked);
    let err = w.svc.create_session(&w.pool, &WorkerId::from("w1")).unwrap_err();
    assert_eq!(err.code, ErrorCode::WorkerBlocked);
}

#[test]
fn sessions_expire_and_unknown_tokens_fail() {
    let mut w = world(150, ConsensusPolicy::default());
    let t = w.login("w1");
    w.clock.advance(12 * 3600);
    assert_eq!(w.svc.next_hit(&mut w.pool, &t, "kitchen").unwrap_err().code, ErrorCode::SessionExpired);
    assert_eq!(
        w.svc.submit(&mut w.pool, &t, &"kitchen-1-0".into(), vec![]).unwrap_err().code,
        ErrorCode::SessionExpired
    );
    assert_eq!(w.svc.next_hit(&mut w.pool, "nope", "kitchen").unwrap_err().code, ErrorCode::InvalidSession);
    let t = w.login("w1");
    assert_eq!(w.svc.next_hit(&mut w.pool, &t, "garden").unwrap_err().code, ErrorCode::NotFound);
}

#[test]
fn timed_out_assignments_release_their_items() {
    let mut w = world(150, ConsensusPolicy::default());
    let (t1, t2) = (w.login("w1"), w.login("w2"));
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    assert_eq!(w.svc.pending("kitchen"), 0);
    w.clock.advance(30 * 60);
    assert!(!w.svc.is_drained(&mut w.pool, "kitchen").unwrap());
    assert_eq!(w.svc.open_hits("kitchen"), 0);
    assert!(real_targets(&w, &a)
        .iter()
        .all(|id| w.pool.item(id).unwrap().state == ItemState::Unlabeled));
    let err = w.svc.submit(&mut w.pool, &t1, &a.hit_id, vec![Answer::No; HIT_SLOTS]).unwrap_err();
    assert_eq!(err.code, ErrorCode::NotFound);
    let b = w.svc.next_hit(&mut w.pool, &t2, "kitchen").unwrap();
    let mut ta = real_targets(&w, &a);
    let mut tb = real_targets(&w, &b);
    ta.sort();
    tb.sort();
    assert_eq!(ta, tb);
}

#[test]
fn short_final_hit_is_padded_without_extra_labels() {
    let mut w = world(200, ConsensusPolicy::default());
    let t1 = w.login("w1");
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    assert_eq!(real_targets(&w, &a).len(), 150);
    let b = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    assert_eq!(b.slots.len(), HIT_SLOTS);
    let real = real_targets(&w, &b);
    assert_eq!(real.len(), 50);
    let ans = w.answers(&b, Answer::No, 0);
    let r = w.svc.submit(&mut w.pool, &t1, &b.hit_id, ans).unwrap();
    assert_eq!(r.labels_recorded, 50);
}

#[test]
fn gold_urls_come_from_the_pool() {
    let w = world(150, ConsensusPolicy::default());
    let mut svc = TaskService::new(ServiceConfig::default()).unwrap();
    let item = |id: &str| GoldItem {
        item_id: ItemId::from(id),
        url: None,
        truth: Answer::Yes,
        role: GoldRole::Online,
        explanation: None,
    };
    svc.set_gold(&w.pool, "kitchen", GoldPools::from_items([item("it0001")]).unwrap())
        .unwrap();
    assert_eq!(
        svc.gold("kitchen").unwrap().online[0].url.as_deref(),
        Some("http://img/1.jpg")
    );
    let err = svc
        .set_gold(&w.pool, "kitchen", GoldPools::from_items([item("elsewhere")]).unwrap())
        .unwrap_err();
    assert_eq!(err.code, ErrorCode::InvalidRequest);
}

#[test]
fn metrics_for_fresh_and_unknown_categories() {
    let w = world(150, ConsensusPolicy::default());
    let m = metrics(&w.pool, "kitchen").unwrap();
    assert_eq!(m.iteration, 0);
    assert_eq!(m.open_iteration, Some(1));
    assert!(m.amplification.is_none());
    assert_eq!(m.state_counts[&ItemState::Unlabeled], 1000);
    assert_eq!(metrics(&w.pool, "garden").unwrap_err().code, ErrorCode::NotFound);
}

#[test]
fn restart_rebuilds_the_queue() {
    let mut w = world(150, ConsensusPolicy::default());
    let t1 = w.login("w1");
    let a = w.svc.next_hit(&mut w.pool, &t1, "kitchen").unwrap();
    let mut svc = TaskService::new(ServiceConfig::default()).unwrap();
    svc.set_gold(&w.pool, "kitchen", w.gold.clone()).unwrap();
    let t = svc.create_session(&w.pool, &WorkerId::from("w2")).unwrap().token;
    let b = svc.next_hit(&mut w.pool, &t, "kitchen").unwrap();
    let mut ta = real_targets(&w, &a);
    let mut tb: Vec<ItemId> = b
        .slots
        .iter()
        .filter(|s| s.tutorial.is_none() && s.check.is_none() && w.truth(&s.item_id).is_none())
        .map(|s| s.item_id.clone())
        .collect();
    ta.sort();
    tb.sort();
    assert_eq!(ta, tb);
}
