use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CrowdError;
use crate::types::{Answer, ItemId, WorkerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictRule {
    /// Collect more labels and let the majority decide.
    #[default]
    ThirdLabel,
    DiscardConflicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusPolicy {
    pub required_confirmations: usize,
    pub conflict_rule: ConflictRule,
}

impl Default for ConsensusPolicy {
    fn default() -> Self {
        Self {
            required_confirmations: 2,
            conflict_rule: ConflictRule::ThirdLabel,
        }
    }
}

impl ConsensusPolicy {
    pub fn validate(&self) -> Result<(), CrowdError> {
        if self.required_confirmations < 2 {
            return Err(CrowdError::InvalidArgument(
                "required_confirmations must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Votes needed for a majority decision after a conflict.
    pub fn majority_panel(&self) -> usize {
        2 * self.required_confirmations - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    Positive,
    Negative,
    NeedsMore,
    Unresolved,
}

/// Decides an item from its votes, given in arrival order. A worker counts
/// once with their latest answer; workers are ranked by first appearance.
pub fn consensus(votes: &[(WorkerId, Answer)], policy: &ConsensusPolicy) -> ConsensusOutcome {
    let mut order: Vec<&WorkerId> = Vec::new();
    for (w, _) in votes {
        if !order.contains(&w) {
            order.push(w);
        }
    }
    let latest = |w: &WorkerId| {
        votes
            .iter()
            .rev()
            .find(|(v, _)| v == w)
            .map(|(_, a)| *a)
            .unwrap_or_default()
    };
    let answers: Vec<Answer> = order.iter().map(|w| latest(w)).collect();

    let r = policy.required_confirmations;
    let (mut yes, mut no) = (0, 0);
    for a in &answers {
        if a.is_yes() {
            yes += 1;
        } else {
            no += 1;
        }
        if yes > 0 && no > 0 {
            break;
        }
        if yes >= r {
            return ConsensusOutcome::Positive;
        }
        if no >= r {
            return ConsensusOutcome::Negative;
        }
    }
    if yes == 0 || no == 0 {
        return ConsensusOutcome::NeedsMore;
    }
    match policy.conflict_rule {
        ConflictRule::DiscardConflicts => ConsensusOutcome::Unresolved,
        ConflictRule::ThirdLabel => {
            let panel = policy.majority_panel();
            if answers.len() < panel {
                return ConsensusOutcome::NeedsMore;
            }
            let yes = answers[..panel].iter().filter(|a| a.is_yes()).count();
            if yes * 2 > panel {
                ConsensusOutcome::Positive
            } else {
                ConsensusOutcome::Negative
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CornerCases {
    /// Non-unanimous items, in input order.
    pub candidates: Vec<ItemId>,
    /// Items without exactly three labels.
    pub skipped: Vec<ItemId>,
}

/// Picks items whose three labels disagree, as tutorial candidates.
pub fn seed_corner_cases<'a, I>(labeled: I) -> CornerCases
where
    I: IntoIterator<Item = (&'a ItemId, &'a [Answer])>,
{
    let mut out = CornerCases::default();
    let mut seen = BTreeSet::new();
    for (id, labels) in labeled {
        if labels.len() != 3 || !seen.insert(id) {
            log::warn!("corner-case seeding skips {id}: {} labels", labels.len());
            out.skipped.push(id.clone());
            continue;
        }
        let yes = labels.iter().filter(|a| a.is_yes()).count();
        if yes != 0 && yes != 3 {
            out.candidates.push(id.clone());
        }
    }
    out
}
