//! Item manifest rows and the ingest report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::ItemId;

/// Default minimum image side; retained items must be strictly larger.
pub const DEFAULT_MIN_DIM: u32 = 256;

/// One line of an item manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub url: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl ManifestRow {
    pub fn item_id(&self) -> ItemId {
        match &self.id {
            Some(id) => ItemId::new(id.clone()),
            None => id_from_url(&self.url),
        }
    }
}

/// Item id derived from a URL: the first 16 hex digits of its SHA-256.
pub fn id_from_url(url: &str) -> ItemId {
    let digest = Sha256::digest(url.as_bytes());
    ItemId::new(hex::encode(&digest[..8]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub min_dim: u32,
    /// Category for rows that do not name one.
    pub default_category: Option<String>,
    /// Store undersized items as `RejectedAtIngest` instead of dropping them.
    pub keep_rejected: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            min_dim: DEFAULT_MIN_DIM,
            default_category: None,
            keep_rejected: true,
        }
    }
}

/// Row that could not be ingested, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

/// `seen == duplicate_urls + rejected_size + accepted`. Malformed rows are not
/// part of `seen`; they are listed separately.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub seen: u64,
    pub duplicate_urls: u64,
    pub rejected_size: u64,
    pub accepted: u64,
    pub malformed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub malformed_rows: Vec<MalformedRow>,
}

impl IngestReport {
    pub fn is_conserved(&self) -> bool {
        self.seen == self.duplicate_urls + self.rejected_size + self.accepted
    }
}

/// Strict size rule: the smaller side must exceed `min_dim`.
pub fn passes_size_filter(width: u32, height: u32, min_dim: u32) -> bool {
    width.min(height) > min_dim
}
