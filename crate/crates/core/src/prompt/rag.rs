//! Tag-overlap retrieval from a fixed document store.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::prompt::policy::{InfoContext, StructuredPrompt};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagDocument {
    pub key: String,
    pub tags: Vec<String>,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagStore {
    pub documents: Vec<RagDocument>,
    /// Number of documents returned per query.
    pub capacity: usize,
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl RagStore {
    pub fn new(documents: Vec<RagDocument>, capacity: usize) -> Result<Self> {
        let s = Self { documents, capacity };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.documents.is_empty() {
            return Err(GameError::invalid("retrieval store is empty"));
        }
        if self.capacity == 0 {
            return Err(GameError::invalid("retrieval capacity must be at least 1"));
        }
        let mut keys = BTreeSet::new();
        for d in &self.documents {
            if !keys.insert(d.key.as_str()) {
                return Err(GameError::invalid(format!("duplicate document key `{}`", d.key)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Retrieved {
    pub key: String,
    pub score: usize,
    pub body: String,
}

/// Top documents by overlap between their tags and the tokens of the
/// rendered prompt and private-information values; key order breaks ties,
/// so a non-empty store always returns something.
pub fn rag_retrieve(store: &RagStore, prompt: &StructuredPrompt, info: &InfoContext) -> Result<Vec<Retrieved>> {
    store.validate()?;
    let query: BTreeSet<String> = tokens(&prompt.rendered)
        .chain(info.private_info.values().flat_map(|v| tokens(v)))
        .collect();
    let mut scored: Vec<Retrieved> = store
        .documents
        .iter()
        .map(|d| {
            let tags: BTreeSet<String> = d.tags.iter().flat_map(|t| tokens(t)).collect();
            Retrieved {
                key: d.key.clone(),
                score: tags.intersection(&query).count(),
                body: d.body.clone(),
            }
        })
        .collect();
    scored.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.key.cmp(&b.key)));
    scored.truncate(store.capacity);
    Ok(scored)
}
