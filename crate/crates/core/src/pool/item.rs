use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::types::{Answer, HitId, ItemId, Label, WorkerId};

/// Lifecycle state of a candidate item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Unlabeled,
    InFlight,
    HumanPositive,
    HumanNegative,
    AutoPositive,
    AutoNegative,
    RejectedAtIngest,
}

impl ItemState {
    pub const ALL: [ItemState; 7] = [
        ItemState::Unlabeled,
        ItemState::InFlight,
        ItemState::HumanPositive,
        ItemState::HumanNegative,
        ItemState::AutoPositive,
        ItemState::AutoNegative,
        ItemState::RejectedAtIngest,
    ];

    /// Whether `self -> next` is an edge of the lifecycle state machine.
    /// `RejectedAtIngest` is never a transition target; it is only assigned at ingest.
    pub fn can_transition_to(self, next: ItemState) -> bool {
        use ItemState::*;
        matches!(
            (self, next),
            (Unlabeled, InFlight | AutoPositive | AutoNegative)
                | (InFlight, HumanPositive | HumanNegative | Unlabeled)
        )
    }

    pub fn is_terminal(self) -> bool {
        use ItemState::*;
        matches!(
            self,
            HumanPositive | HumanNegative | AutoPositive | AutoNegative | RejectedAtIngest
        )
    }

    /// Final label and its source, for resolved states.
    pub fn resolution(self) -> Option<(Label, Provenance)> {
        use ItemState::*;
        match self {
            HumanPositive => Some((Label::Positive, Provenance::Human)),
            HumanNegative => Some((Label::Negative, Provenance::Human)),
            AutoPositive => Some((Label::Positive, Provenance::Auto)),
            AutoNegative => Some((Label::Negative, Provenance::Auto)),
            _ => None,
        }
    }

    pub fn human(label: Label) -> Self {
        match label {
            Label::Positive => ItemState::HumanPositive,
            Label::Negative => ItemState::HumanNegative,
        }
    }

    pub fn auto(label: Label) -> Self {
        match label {
            Label::Positive => ItemState::AutoPositive,
            Label::Negative => ItemState::AutoNegative,
        }
    }
}

impl fmt::Display for ItemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ItemState::Unlabeled => "unlabeled",
            ItemState::InFlight => "in_flight",
            ItemState::HumanPositive => "human_positive",
            ItemState::HumanNegative => "human_negative",
            ItemState::AutoPositive => "auto_positive",
            ItemState::AutoNegative => "auto_negative",
            ItemState::RejectedAtIngest => "rejected_at_ingest",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Auto,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: ItemState,
    pub at: Timestamp,
    pub provenance: Provenance,
    pub iteration: u32,
}

/// One accepted human answer on a target item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub worker_id: WorkerId,
    pub hit_id: HitId,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: ItemId,
    pub url: String,
    pub width: u32,
    pub height: u32,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    pub state: ItemState,
    pub state_history: Vec<StateChange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub votes: Vec<Vote>,
}

impl ItemRecord {
    /// Iteration of the most recent state change.
    pub fn last_iteration(&self) -> u32 {
        self.state_history.last().map_or(0, |c| c.iteration)
    }

    pub fn has_vote_from(&self, worker: &WorkerId) -> bool {
        self.votes.iter().any(|v| &v.worker_id == worker)
    }

    /// Every consecutive pair of history entries is a legal edge.
    pub fn history_is_sound(&self) -> bool {
        let Some(first) = self.state_history.first() else {
            return false;
        };
        if !matches!(first.state, ItemState::Unlabeled | ItemState::RejectedAtIngest)
            || first.provenance != Provenance::Ingest
        {
            return false;
        }
        self.state_history
            .windows(2)
            .all(|w| w[0].state.can_transition_to(w[1].state))
            && self.state_history.last().map(|c| c.state) == Some(self.state)
    }
}
