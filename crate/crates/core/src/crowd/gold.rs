use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::CrowdError;
use crate::types::{Answer, ItemId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldRole {
    Tutorial,
    Online,
    Hidden,
}

impl std::fmt::Display for GoldRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GoldRole::Tutorial => "tutorial",
            GoldRole::Online => "online",
            GoldRole::Hidden => "hidden",
        })
    }
}

/// An item with expert-known truth. One line of a gold file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldItem {
    pub item_id: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub truth: Answer,
    pub role: GoldRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// Gold items of one category split by role. Roles are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPools {
    pub tutorial: Vec<GoldItem>,
    pub online: Vec<GoldItem>,
    pub hidden: Vec<GoldItem>,
}

impl GoldPools {
    pub fn from_items(items: impl IntoIterator<Item = GoldItem>) -> Result<Self, CrowdError> {
        let mut pools = GoldPools::default();
        let mut seen = BTreeSet::new();
        for item in items {
            if !seen.insert(item.item_id.clone()) {
                return Err(CrowdError::InvalidGold(format!(
                    "item {} listed more than once",
                    item.item_id
                )));
            }
            match item.role {
                GoldRole::Tutorial => {
                    if item.explanation.as_deref().is_none_or(|e| e.trim().is_empty()) {
                        return Err(CrowdError::InvalidGold(format!(
                            "tutorial item {} has no explanation",
                            item.item_id
                        )));
                    }
                    pools.tutorial.push(item);
                }
                GoldRole::Online => pools.online.push(item),
                GoldRole::Hidden => pools.hidden.push(item),
            }
        }
        Ok(pools)
    }

    /// Reads a line-delimited gold file. Blank lines are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, CrowdError> {
        let mut items = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CrowdError::InvalidGold(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: GoldItem = serde_json::from_str(&line)
                .map_err(|e| CrowdError::InvalidGold(format!("line {}: {e}", n + 1)))?;
            items.push(item);
        }
        Self::from_items(items)
    }

    pub fn role(&self, role: GoldRole) -> &[GoldItem] {
        match role {
            GoldRole::Tutorial => &self.tutorial,
            GoldRole::Online => &self.online,
            GoldRole::Hidden => &self.hidden,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &GoldItem> {
        self.tutorial.iter().chain(&self.online).chain(&self.hidden)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.all().any(|g| &g.item_id == id)
    }

    pub fn len(&self) -> usize {
        self.tutorial.len() + self.online.len() + self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
