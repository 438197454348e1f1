use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gold::{GoldItem, GoldPools, GoldRole};
use super::CrowdError;
use crate::types::{Answer, HitId, ItemId};

pub const TARGET_SLOTS: usize = 150;
pub const TUTORIAL_SLOTS: usize = 15;
pub const ONLINE_SLOTS: usize = 20;
pub const HIDDEN_SLOTS: usize = 20;
pub const HIT_SLOTS: usize = TARGET_SLOTS + TUTORIAL_SLOTS + ONLINE_SLOTS + HIDDEN_SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Target,
    Tutorial,
    Online,
    Hidden,
}

impl From<GoldRole> for SlotKind {
    fn from(role: GoldRole) -> Self {
        match role {
            GoldRole::Tutorial => SlotKind::Tutorial,
            GoldRole::Online => SlotKind::Online,
            GoldRole::Hidden => SlotKind::Hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRef {
    pub item_id: ItemId,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub item: ItemRef,
    pub kind: SlotKind,
    /// Gold truth; `None` on target slots.
    pub truth: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// One assembled HIT, server side. Holds every truth, so it never leaves the
/// server as is; see [`redact_for_client`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitSpec {
    pub hit_id: HitId,
    pub category: String,
    pub slots: Vec<Slot>,
}

impl HitSpec {
    pub fn count(&self, kind: SlotKind) -> usize {
        self.slots.iter().filter(|s| s.kind == kind).count()
    }

    pub fn positions(&self, kind: SlotKind) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.kind == kind)
            .map(|(i, _)| i)
    }

    pub fn targets(&self) -> impl Iterator<Item = &ItemRef> {
        self.slots
            .iter()
            .filter(|s| s.kind == SlotKind::Target)
            .map(|s| &s.item)
    }

    /// Composition, tutorial prefix, gold truths and no repeated items.
    pub fn validate(&self) -> Result<(), CrowdError> {
        let bad = |why: String| Err(CrowdError::InvalidHit(format!("{}: {why}", self.hit_id)));
        if self.slots.len() != HIT_SLOTS {
            return bad(format!("{} slots", self.slots.len()));
        }
        for (kind, want) in [
            (SlotKind::Target, TARGET_SLOTS),
            (SlotKind::Tutorial, TUTORIAL_SLOTS),
            (SlotKind::Online, ONLINE_SLOTS),
            (SlotKind::Hidden, HIDDEN_SLOTS),
        ] {
            let got = self.count(kind);
            if got != want {
                return bad(format!("{got} {kind:?} slots, expected {want}"));
            }
        }
        if self.slots[..TUTORIAL_SLOTS]
            .iter()
            .any(|s| s.kind != SlotKind::Tutorial)
        {
            return bad("tutorial slots must come first".into());
        }
        let mut seen = BTreeSet::new();
        for slot in &self.slots {
            if !seen.insert(&slot.item.item_id) {
                return bad(format!("item {} repeated", slot.item.item_id));
            }
            if (slot.kind == SlotKind::Target) == slot.truth.is_some() {
                return bad(format!("slot for {} has the wrong truth shape", slot.item.item_id));
            }
        }
        Ok(())
    }
}

// Callers should give every gold item a real image URL; an empty one would
// set the slot apart from targets in the client payload.
fn gold_url(item: &GoldItem) -> String {
    item.url.clone().unwrap_or_default()
}

fn draw<'a>(
    pools: &'a GoldPools,
    role: GoldRole,
    n: usize,
    exclude: &BTreeSet<ItemId>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'a GoldItem>, CrowdError> {
    let eligible: Vec<&GoldItem> = pools
        .role(role)
        .iter()
        .filter(|g| !exclude.contains(&g.item_id))
        .collect();
    if eligible.len() < n {
        return Err(CrowdError::PoolExhausted {
            role,
            needed: n,
            available: eligible.len(),
        });
    }
    Ok(index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect())
}

/// Builds a 205-slot HIT: 15 tutorial items up front, then the 150 targets
/// shuffled together with 20 online and 20 hidden gold items. Gold items in
/// `exclude` are not drawn. Deterministic in `seed`.
pub fn assemble_hit(
    hit_id: HitId,
    category: &str,
    targets: Vec<ItemRef>,
    pools: &GoldPools,
    exclude: &BTreeSet<ItemId>,
    seed: u64,
) -> Result<HitSpec, CrowdError> {
    if targets.len() != TARGET_SLOTS {
        return Err(CrowdError::InvalidHit(format!(
            "{} targets, expected {TARGET_SLOTS}",
            targets.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = exclude.clone();
    taken.extend(targets.iter().map(|t| t.item_id.clone()));

    let mut pick = |role: GoldRole, n: usize, taken: &mut BTreeSet<ItemId>| -> Result<Vec<Slot>, CrowdError> {
        let items = draw(pools, role, n, taken, &mut rng)?;
        Ok(items
            .into_iter()
            .map(|g| {
                taken.insert(g.item_id.clone());
                Slot {
                    item: ItemRef {
                        item_id: g.item_id.clone(),
                        url: gold_url(g),
                    },
                    kind: role.into(),
                    truth: Some(g.truth),
                    explanation: if role == GoldRole::Tutorial {
                        g.explanation.clone()
                    } else {
                        None
                    },
                }
            })
            .collect())
    };
    let mut slots = pick(GoldRole::Tutorial, TUTORIAL_SLOTS, &mut taken)?;
    let mut body = pick(GoldRole::Online, ONLINE_SLOTS, &mut taken)?;
    body.extend(pick(GoldRole::Hidden, HIDDEN_SLOTS, &mut taken)?);
    body.extend(targets.into_iter().map(|item| Slot {
        item,
        kind: SlotKind::Target,
        truth: None,
        explanation: None,
    }));
    body.shuffle(&mut rng);
    slots.extend(body);

    let spec = HitSpec {
        hit_id,
        category: category.to_owned(),
        slots,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialHint {
    pub truth: Answer,
    pub explanation: String,
}

/// A slot as the worker's browser sees it. Target and hidden-gold slots are
/// serialized identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSlot {
    /// 1-based.
    pub position: usize,
    pub item_id: ItemId,
    pub url: String,
    pub tutorial: Option<TutorialHint>,
    /// Expected answer on online check slots.
    pub check: Option<Answer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPayload {
    pub hit_id: HitId,
    pub category: String,
    pub definition_text: String,
    pub slots: Vec<ClientSlot>,
}

pub fn redact_for_client(spec: &HitSpec, definition_text: &str) -> ClientPayload {
    let slots = spec
        .slots
        .iter()
        .enumerate()
        .map(|(i, slot)| ClientSlot {
            position: i + 1,
            item_id: slot.item.item_id.clone(),
            url: slot.item.url.clone(),
            tutorial: match slot.kind {
                SlotKind::Tutorial => slot.truth.map(|truth| TutorialHint {
                    truth,
                    explanation: slot.explanation.clone().unwrap_or_default(),
                }),
                _ => None,
            },
            check: match slot.kind {
                SlotKind::Online => slot.truth,
                _ => None,
            },
        })
        .collect();
    ClientPayload {
        hit_id: spec.hit_id.clone(),
        category: spec.category.clone(),
        definition_text: definition_text.to_owned(),
        slots,
    }
}
