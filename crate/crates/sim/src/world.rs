use std::collections::BTreeMap;

use labelamp::crowd::{GoldItem, GoldPools, GoldRole};
use labelamp::pool::{id_from_url, ManifestRow};
use labelamp::{Answer, ItemId, Label, WorkerId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthItem {
    pub id: ItemId,
    pub url: String,
    pub truth: Label,
    pub difficulty: f64,
    /// `[signal, key]`: signal is `(2y-1)(1-d)`, key is a uniform draw the
    /// oracle scorer hashes into per-item noise.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticPool {
    pub items: Vec<SynthItem>,
}

impl SyntheticPool {
    pub fn truths(&self) -> BTreeMap<ItemId, Label> {
        self.items.iter().map(|i| (i.id.clone(), i.truth)).collect()
    }

    pub fn rows(&self, category: &str) -> impl Iterator<Item = ManifestRow> + '_ {
        let category = category.to_owned();
        self.items.iter().map(move |i| ManifestRow {
            id: Some(i.id.to_string()),
            url: i.url.clone(),
            width: 640,
            height: 480,
            category: Some(category.clone()),
            features: Some(i.features.clone()),
        })
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.truth.is_positive()).count()
    }
}

fn image_url(tag: &str, seed: u64, i: usize) -> (ItemId, String) {
    let id = id_from_url(&format!("{tag}/{seed}/{i}"));
    let url = format!("http://img.example/{id}.jpg");
    (id, url)
}

pub fn gen_pool(config: &SimConfig, seed: u64) -> SyntheticPool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = Beta::new(config.difficulty.alpha, config.difficulty.beta).expect("validated beta");
    let items = (0..config.pool_size)
        .map(|i| {
            let truth = if rng.random_bool(config.prevalence) {
                Label::Positive
            } else {
                Label::Negative
            };
            // Beta can return exactly 1.0 in floating point; keep d in [0, 1)
            let difficulty: f64 = beta.sample(&mut rng).min(1.0 - f64::EPSILON);
            let sign = if truth.is_positive() { 1.0 } else { -1.0 };
            let key: f64 = rng.random();
            let (id, url) = image_url("item", seed, i);
            SynthItem {
                id,
                url,
                truth,
                difficulty,
                features: vec![sign * (1.0 - difficulty), key],
            }
        })
        .collect();
    SyntheticPool { items }
}

/// Gold pools whose items look like any other image. Each role gets exactly
/// `round(yes_fraction · size)` yes-truth items.
pub fn gen_gold(config: &SimConfig, seed: u64) -> GoldPools {
    let mut items = Vec::new();
    let mut n = 0;
    for (role, size) in [
        (GoldRole::Tutorial, config.gold.tutorial),
        (GoldRole::Online, config.gold.online),
        (GoldRole::Hidden, config.gold.hidden),
    ] {
        let yes = (config.gold.yes_fraction * size as f64).round() as usize;
        for k in 0..size {
            let (item_id, url) = image_url("gold", seed, n);
            n += 1;
            let truth = Answer::from_bool(k < yes);
            items.push(GoldItem {
                item_id,
                url: Some(url),
                truth,
                role,
                explanation: (role == GoldRole::Tutorial).then(|| {
                    if truth.is_yes() {
                        "The object fills most of the frame.".to_owned()
                    } else {
                        "Only a picture of the object appears here.".to_owned()
                    }
                }),
            });
        }
    }
    GoldPools::from_items(items).expect("generated gold ids are distinct")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorker {
    pub worker_id: WorkerId,
    pub flip_prob: f64,
    pub is_spammer: bool,
}

pub fn make_workers(config: &SimConfig, seed: u64) -> Vec<SimWorker> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_spam = (config.spammer_fraction * config.worker_count as f64).round() as usize;
    let spammers: std::collections::BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, config.worker_count, n_spam).into_iter().collect();
    (0..config.worker_count)
        .map(|i| SimWorker {
            worker_id: WorkerId::new(format!("worker-{i:03}")),
            flip_prob: if config.flip_prob.max > config.flip_prob.min {
                rng.random_range(config.flip_prob.min..=config.flip_prob.max)
            } else {
                config.flip_prob.min
            },
            is_spammer: spammers.contains(&i),
        })
        .collect()
}

/// A worker's answer about an item with known truth.
pub fn sim_label<R: Rng + ?Sized>(worker: &SimWorker, truth: Answer, rng: &mut R) -> Answer {
    if worker.is_spammer {
        return Answer::No;
    }
    if rng.random_bool(worker.flip_prob) {
        truth.flipped()
    } else {
        truth
    }
}
