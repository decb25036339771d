//! Competency-question library: a JSON manifest plus one parameterised
//! query file per CQ, instantiated against graph entities.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Graph, Term};
use crate::query::{parse_query, QueryError, QueryPlan};

pub const MANIFEST_FILE: &str = "cq_manifest.json";

/// Beat tags whose CQs may ask for snippet enrichment.
pub const CONTEXTUAL_BEATS: &[&str] = &["Cultural Impact", "Legacy & Reflection"];

/// Question markers whose slot name differs from the lowercased marker.
const MARKER_ALIASES: &[(&str, &str)] = &[("artist", "musicgroup")];

#[derive(Debug, Error)]
pub enum CqError {
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{cq_id}: slots differ (question {question:?}, declared {declared:?}, query {query:?})")]
    SlotMismatch { cq_id: String, question: Vec<String>, declared: Vec<String>, query: Vec<String> },
    #[error("{cq_id}: {source}")]
    Query { cq_id: String, source: QueryError },
    #[error("unknown CQ {0}")]
    UnknownCq(String),
    #[error("{cq_id}: no binding for slot {slot}")]
    MissingBinding { cq_id: String, slot: String },
    #[error("{cq_id}: binding for unknown slot {slot}")]
    UnknownSlot { cq_id: String, slot: String },
    #[error("entity not in graph: {0}")]
    EntityNotInGraph(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    question: String,
    slots: Vec<String>,
    query: String,
    beats: Vec<String>,
    personas: Vec<String>,
    needs_enrichment: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqTemplate {
    pub id: String,
    pub question_template: String,
    pub slots: Vec<String>,
    pub query_file: PathBuf,
    pub query_text: String,
    pub plan: QueryPlan,
    pub beats: Vec<String>,
    pub personas: Vec<String>,
    pub needs_enrichment: bool,
}

impl CqTemplate {
    pub fn has_beat(&self, tag: &str) -> bool {
        self.beats.iter().any(|b| b == tag)
    }

    pub fn for_persona(&self, persona: &str) -> bool {
        self.personas.iter().any(|p| p == persona)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCq {
    pub template_id: String,
    pub bindings: BTreeMap<String, String>,
    pub question_text: String,
    pub bound_plan: QueryPlan,
    pub needs_enrichment: bool,
    pub query_file: PathBuf,
}

/// Templates sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CqLibrary {
    templates: Vec<CqTemplate>,
}

impl CqLibrary {
    pub fn from_templates(mut templates: Vec<CqTemplate>) -> Self {
        templates.sort_by(|a, b| a.id.cmp(&b.id));
        CqLibrary { templates }
    }

    pub fn get(&self, id: &str) -> Option<&CqTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn templates(&self) -> &[CqTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Projected variable names across all queries; these must never surface in prose.
    pub fn variable_names(&self) -> BTreeSet<String> {
        self.templates.iter().flat_map(|t| t.plan.select_vars().into_iter().map(str::to_string)).collect()
    }
}

fn marker_regex() -> Regex {
    Regex::new(r"\[([A-Za-z_][A-Za-z0-9_]*)\]").expect("static regex")
}

fn marker_slot(marker: &str) -> String {
    let lower = marker.to_ascii_lowercase();
    MARKER_ALIASES.iter().find(|(m, _)| *m == lower).map(|(_, s)| s.to_string()).unwrap_or(lower)
}

/// Slot names referenced by `[Marker]`s in a question template.
pub fn question_slots(question: &str) -> BTreeSet<String> {
    marker_regex().captures_iter(question).map(|c| marker_slot(&c[1])).collect()
}

/// Loads `cq_manifest.json` and its query files from `dir`. A directory
/// without a manifest is an empty library.
pub fn load_library(dir: &Path) -> Result<CqLibrary, CqError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        log::warn!("no {} in {}; empty CQ library", MANIFEST_FILE, dir.display());
        return Ok(CqLibrary::default());
    }
    let manifest_err = |message: String| CqError::Manifest { path: manifest_path.clone(), message };
    let text = fs::read_to_string(&manifest_path).map_err(|e| manifest_err(e.to_string()))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))?;
    let id_pattern = Regex::new(r"^CQ-[EL]\d+$").expect("static regex");
    let mut seen = BTreeSet::new();
    let mut templates = Vec::with_capacity(entries.len());
    for entry in entries {
        if !id_pattern.is_match(&entry.id) {
            return Err(manifest_err(format!("malformed CQ id {:?}", entry.id)));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(manifest_err(format!("duplicate CQ id {}", entry.id)));
        }
        if entry.needs_enrichment && !entry.beats.iter().any(|b| CONTEXTUAL_BEATS.contains(&b.as_str())) {
            return Err(manifest_err(format!("{} needs enrichment but has no contextual beat", entry.id)));
        }
        let query_file = dir.join(&entry.query);
        let query_text = fs::read_to_string(&query_file)
            .map_err(|e| manifest_err(format!("{}: query file {}: {e}", entry.id, query_file.display())))?;
        if let Some(header_id) = header_id(&query_text) {
            if header_id != entry.id {
                return Err(manifest_err(format!("{} has header id {header_id}", query_file.display())));
            }
        }
        let plan = parse_query(&query_text).map_err(|source| CqError::Query { cq_id: entry.id.clone(), source })?;
        let from_question = question_slots(&entry.question);
        let declared: BTreeSet<String> = entry.slots.iter().cloned().collect();
        let from_query = plan.slots();
        if from_question != declared || declared != from_query || declared.len() != entry.slots.len() {
            return Err(CqError::SlotMismatch {
                cq_id: entry.id,
                question: from_question.into_iter().collect(),
                declared: entry.slots,
                query: from_query.into_iter().collect(),
            });
        }
        templates.push(CqTemplate {
            id: entry.id,
            question_template: entry.question,
            slots: entry.slots,
            query_file,
            query_text,
            plan,
            beats: entry.beats,
            personas: entry.personas,
            needs_enrichment: entry.needs_enrichment,
        });
    }
    Ok(CqLibrary::from_templates(templates))
}

fn header_id(query_text: &str) -> Option<&str> {
    let line = query_text.lines().find(|l| l.starts_with("#CQ-ID:"))?;
    line["#CQ-ID:".len()..].split_whitespace().next()
}

/// Binds a library CQ to graph entities and realises its question.
pub fn instantiate(
    library: &CqLibrary,
    cq_id: &str,
    bindings: &BTreeMap<String, String>,
    graph: &Graph,
) -> Result<BoundCq, CqError> {
    let template = library.get(cq_id).ok_or_else(|| CqError::UnknownCq(cq_id.to_string()))?;
    if let Some(slot) = template.slots.iter().find(|s| !bindings.contains_key(*s)) {
        return Err(CqError::MissingBinding { cq_id: cq_id.to_string(), slot: slot.clone() });
    }
    if let Some(slot) = bindings.keys().find(|k| !template.slots.contains(k)) {
        return Err(CqError::UnknownSlot { cq_id: cq_id.to_string(), slot: slot.clone() });
    }
    for iri in bindings.values() {
        if !graph.mentions(&Term::iri(iri.as_str())) {
            return Err(CqError::EntityNotInGraph(iri.clone()));
        }
    }
    let bound_plan = template
        .plan
        .bind_parameters(bindings)
        .map_err(|source| CqError::Query { cq_id: cq_id.to_string(), source })?;
    let question_text = marker_regex()
        .replace_all(&template.question_template, |c: &regex::Captures| {
            let iri = &bindings[&marker_slot(&c[1])];
            graph.display_label(&Term::iri(iri.as_str()))
        })
        .into_owned();
    Ok(BoundCq {
        template_id: template.id.clone(),
        bindings: bindings.clone(),
        question_text,
        bound_plan,
        needs_enrichment: template.needs_enrichment,
        query_file: template.query_file.clone(),
    })
}
