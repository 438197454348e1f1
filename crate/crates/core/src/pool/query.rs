//! Search query plans: every (adjective, category) query string crossed with
//! fixed-length date spans that tile the collection range.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::PoolError;

/// Default query span, in days.
pub const DEFAULT_SPAN_DAYS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryKind {
    Scene,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub kind: CategoryKind,
    /// Definition shown to annotators on the instructions page.
    #[serde(default)]
    pub definition_text: String,
    #[serde(default)]
    pub adjectives: Vec<String>,
}

impl CategorySpec {
    pub fn new(name: impl Into<String>, kind: CategoryKind) -> Self {
        Self {
            name: name.into(),
            kind,
            definition_text: String::new(),
            adjectives: Vec::new(),
        }
    }

    pub fn with_definition(mut self, text: impl Into<String>) -> Self {
        self.definition_text = text.into();
        self
    }

    pub fn with_adjectives<I, S>(mut self, adjectives: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.adjectives = adjectives.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        if self.name.trim().is_empty() {
            return Err(PoolError::InvalidArgument("category name is empty".into()));
        }
        Ok(())
    }

    /// The bare category name followed by one "adjective name" string per adjective.
    pub fn query_strings(&self) -> Vec<String> {
        std::iter::once(self.name.clone())
            .chain(
                self.adjectives
                    .iter()
                    .map(|adj| format!("{} {}", adj, self.name)),
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query: String,
    /// First day of the span, inclusive.
    pub span_start: NaiveDate,
    /// Last day of the span, inclusive.
    pub span_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueryPlan {
    pub queries: Vec<Query>,
}

impl QueryPlan {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Inclusive day spans of `span_days` covering `start..=end`; the last span is
/// truncated at `end`.
pub fn date_spans(
    start: NaiveDate,
    end: NaiveDate,
    span_days: u32,
) -> Result<Vec<(NaiveDate, NaiveDate)>, PoolError> {
    if span_days == 0 {
        return Err(PoolError::InvalidArgument("span_days must be at least 1".into()));
    }
    if end < start {
        return Err(PoolError::InvalidArgument(format!(
            "empty date range {start}..{end}"
        )));
    }
    let step = Duration::days(i64::from(span_days));
    let mut spans = Vec::new();
    let mut cursor = start;
    while cursor <= end {
        let last = (cursor + step - Duration::days(1)).min(end);
        spans.push((cursor, last));
        cursor = last + Duration::days(1);
    }
    Ok(spans)
}

/// Builds the query plan for one category. Queries are grouped by query string
/// (bare name first, then adjectives in order), each crossed with every span.
pub fn generate_query_plan(
    category: &CategorySpec,
    range_start: NaiveDate,
    range_end: NaiveDate,
    span_days: u32,
) -> Result<QueryPlan, PoolError> {
    category.validate()?;
    let spans = date_spans(range_start, range_end, span_days)?;
    let queries = category
        .query_strings()
        .into_iter()
        .flat_map(|q| {
            spans.iter().map(move |&(span_start, span_end)| Query {
                query: q.clone(),
                span_start,
                span_end,
            })
        })
        .collect();
    Ok(QueryPlan { queries })
}
