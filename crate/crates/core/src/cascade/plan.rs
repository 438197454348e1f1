use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CascadeConfig;
use crate::scorer::LabeledExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub unlabeled: usize,
    /// The iteration about to be planned (1-based).
    pub iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub train: usize,
    pub test: usize,
    pub val: usize,
}

impl SamplingPlan {
    pub fn total(&self) -> usize {
        self.train + self.test + self.val
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plan {
    Sampling(SamplingPlan),
    /// Send every remaining unlabeled item to humans.
    Exhaustive { items: usize },
}

/// Exhaustive once the pool is small enough or the iteration cap is reached;
/// otherwise the configured split, scaled down proportionally when fewer than
/// `batch_size` items remain.
pub fn plan_iteration(counts: PoolCounts, cfg: &CascadeConfig) -> Plan {
    if counts.unlabeled <= cfg.exhaustive_limit || counts.iteration >= cfg.max_iterations {
        return Plan::Exhaustive {
            items: counts.unlabeled,
        };
    }
    if counts.unlabeled >= cfg.batch_size {
        return Plan::Sampling(SamplingPlan {
            train: cfg.train_size(),
            test: cfg.test_size,
            val: cfg.val_size,
        });
    }
    let scale = |part: usize| part * counts.unlabeled / cfg.batch_size;
    let test = scale(cfg.test_size);
    let val = scale(cfg.val_size);
    Plan::Sampling(SamplingPlan {
        train: counts.unlabeled - test - val,
        test,
        val,
    })
}

/// Union of newly labeled and carried examples, unique by item id. When an id
/// appears in both, the new label wins and a warning is returned.
pub fn assemble_training_set(
    new_labeled: Vec<LabeledExample>,
    carried: Vec<LabeledExample>,
) -> (Vec<LabeledExample>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(new_labeled.len() + carried.len());
    for ex in new_labeled {
        if seen.insert(ex.item_id.clone()) {
            out.push(ex);
        }
    }
    for ex in carried {
        if seen.contains(&ex.item_id) {
            if let Some(newer) = out.iter().find(|e| e.item_id == ex.item_id) {
                if newer.label != ex.label {
                    let msg = format!(
                        "conflicting labels for {}: keeping newest ({:?})",
                        ex.item_id, newer.label
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            continue;
        }
        seen.insert(ex.item_id.clone());
        out.push(ex);
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ItemId, Label};

    #[test]
    fn exhaustive_when_small() {
        let cfg = CascadeConfig {
            exhaustive_limit: 100,
            ..CascadeConfig::default()
        };
        let plan = plan_iteration(PoolCounts { unlabeled: 50, iteration: 1 }, &cfg);
        assert_eq!(plan, Plan::Exhaustive { items: 50 });
    }

    #[test]
    fn paper_scale_split() {
        let plan = plan_iteration(
            PoolCounts {
                unlabeled: 1_000_000,
                iteration: 1,
            },
            &CascadeConfig::default(),
        );
        assert_eq!(
            plan,
            Plan::Sampling(SamplingPlan {
                train: 25_000,
                test: 10_000,
                val: 5_000
            })
        );
    }

    #[test]
    fn proportional_scaling() {
        let plan = plan_iteration(
            PoolCounts {
                unlabeled: 20_000,
                iteration: 1,
            },
            &CascadeConfig::default(),
        );
        assert_eq!(
            plan,
            Plan::Sampling(SamplingPlan {
                train: 12_500,
                test: 5_000,
                val: 2_500
            })
        );
    }

    #[test]
    fn iteration_cap_forces_exhaustive() {
        let cfg = CascadeConfig {
            max_iterations: 3,
            ..CascadeConfig::default()
        };
        let plan = plan_iteration(
            PoolCounts {
                unlabeled: 1_000_000,
                iteration: 3,
            },
            &cfg,
        );
        assert!(matches!(plan, Plan::Exhaustive { .. }));
    }

    fn ex(id: &str, label: Label) -> LabeledExample {
        LabeledExample {
            item_id: ItemId::from(id),
            features: vec![0.0],
            label,
        }
    }

    #[test]
    fn training_set_union_and_conflicts() {
        let (set, warnings) = assemble_training_set(vec![ex("a", Label::Positive)], vec![]);
        assert_eq!(set.len(), 1);
        assert!(warnings.is_empty());

        let (set, warnings) = assemble_training_set(
            vec![ex("a", Label::Positive), ex("b", Label::Negative)],
            vec![ex("c", Label::Negative), ex("a", Label::Negative)],
        );
        assert_eq!(set.len(), 3);
        assert_eq!(warnings.len(), 1);
        let a = set.iter().find(|e| e.item_id.as_str() == "a").unwrap();
        assert_eq!(a.label, Label::Positive);
    }
}
