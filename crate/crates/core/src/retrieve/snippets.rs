use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::token_set;

use super::RetrieveError;

/// A vetted text summary with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub text: String,
    pub source_url: String,
    pub access_date: String,
    #[serde(rename = "entities", default)]
    pub entity_iris: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<usize>,
}

#[derive(Deserialize)]
struct SnippetFile {
    id: String,
    text: String,
    source_url: Option<String>,
    access_date: Option<String>,
    #[serde(default)]
    entities: Vec<String>,
}

/// Inverted index from content token to snippet positions.
#[derive(Debug, Clone, Default)]
pub struct SnippetIndex {
    snippets: Vec<Snippet>,
    postings: BTreeMap<String, BTreeSet<usize>>,
}

impl SnippetIndex {
    pub fn from_snippets(mut snippets: Vec<Snippet>) -> Self {
        snippets.sort_by(|a, b| a.id.cmp(&b.id));
        let mut postings: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (i, s) in snippets.iter().enumerate() {
            for tok in token_set(&s.text) {
                postings.entry(tok).or_default().insert(i);
            }
        }
        SnippetIndex { snippets, postings }
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    /// Up to `k` snippets sharing at least one content token with `query`,
    /// by descending overlap count, ties by ascending id.
    pub fn search(&self, query: &str, k: usize) -> Vec<Snippet> {
        let mut scores: BTreeMap<usize, usize> = BTreeMap::new();
        for tok in token_set(query) {
            for &i in self.postings.get(&tok).into_iter().flatten() {
                *scores.entry(i).or_default() += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| self.snippets[a.0].id.cmp(&self.snippets[b.0].id)));
        ranked
            .into_iter()
            .take(k)
            .map(|(i, score)| Snippet { score: Some(score), ..self.snippets[i].clone() })
            .collect()
    }
}

/// Reads every `*.json` snippet in `dir`; a missing directory is an empty index.
pub fn build_snippet_index(dir: &Path) -> Result<SnippetIndex, RetrieveError> {
    if !dir.exists() {
        return Ok(SnippetIndex::default());
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| RetrieveError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut snippets = Vec::with_capacity(paths.len());
    let mut ids = BTreeSet::new();
    for path in paths {
        let file = path.display().to_string();
        let text = fs::read_to_string(&path).map_err(|e| RetrieveError::Config(format!("{file}: {e}")))?;
        let raw: SnippetFile =
            serde_json::from_str(&text).map_err(|e| RetrieveError::Config(format!("{file}: {e}")))?;
        let present = |v: &Option<String>| v.as_deref().is_some_and(|s| !s.trim().is_empty());
        if !present(&raw.source_url) || !present(&raw.access_date) {
            return Err(RetrieveError::MissingProvenance(file));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(RetrieveError::Config(format!("{file}: duplicate snippet id {}", raw.id)));
        }
        snippets.push(Snippet {
            id: raw.id,
            text: raw.text,
            source_url: raw.source_url.unwrap_or_default(),
            access_date: raw.access_date.unwrap_or_default(),
            entity_iris: raw.entities,
            score: None,
        });
    }
    Ok(SnippetIndex::from_snippets(snippets))
}
