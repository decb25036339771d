//! Seeded beat planning: persona + length tier → ordered, fully bound CQs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::{instantiate, BoundCq, CqError, CqLibrary};
use crate::kg::Graph;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no eligible CQ for beat {0:?}")]
    NoEligibleCq(String),
    #[error("no compatible entity for slot {0}")]
    NoCompatibleEntity(String),
    #[error("no beat template for length {0}")]
    NoBeatTemplate(LengthTier),
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthTier {
    Small,
    Medium,
    Long,
}

impl LengthTier {
    pub const ALL: [LengthTier; 3] = [LengthTier::Small, LengthTier::Medium, LengthTier::Long];

    pub fn as_str(&self) -> &'static str {
        match self {
            LengthTier::Small => "Small",
            LengthTier::Medium => "Medium",
            LengthTier::Long => "Long",
        }
    }
}

impl fmt::Display for LengthTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LengthTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(LengthTier::Small),
            "medium" => Ok(LengthTier::Medium),
            "long" => Ok(LengthTier::Long),
            _ => Err(format!("unknown length tier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub id: String,
    pub name: String,
    pub tone: Vec<String>,
    pub dos: String,
    pub donts: String,
    pub reading_level: String,
    pub target_words: BTreeMap<LengthTier, (u32, u32)>,
}

impl Persona {
    fn validate(&self) -> Result<(), String> {
        if self.tone.is_empty() {
            return Err("tone must not be empty".into());
        }
        if self.reading_level.trim().is_empty() {
            return Err("reading_level must not be empty".into());
        }
        if let Some((tier, _)) = self.target_words.iter().find(|(_, (lo, hi))| lo > hi) {
            return Err(format!("target_words for {tier} has min > max"));
        }
        Ok(())
    }
}

fn config_err(path: &Path, message: impl ToString) -> PlanError {
    PlanError::Config { path: path.display().to_string(), message: message.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PlanError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| config_err(path, e))
}

pub fn load_persona(path: &Path) -> Result<Persona, PlanError> {
    let persona: Persona = read_json(path)?;
    persona.validate().map_err(|m| config_err(path, m))?;
    Ok(persona)
}

/// Loads every `*.json` persona in `dir`, keyed by id.
pub fn load_personas(dir: &Path) -> Result<BTreeMap<String, Persona>, PlanError> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| config_err(dir, e))?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
        let persona = load_persona(&path)?;
        out.insert(persona.id.clone(), persona);
    }
    Ok(out)
}

/// Ordered beat tags per length tier (`beats.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeatTemplates(pub BTreeMap<LengthTier, Vec<String>>);

impl BeatTemplates {
    pub fn load(path: &Path) -> Result<Self, PlanError> {
        read_json(path)
    }

    pub fn tags(&self, length: LengthTier) -> Option<&[String]> {
        self.0.get(&length).map(Vec::as_slice)
    }
}

/// Slot name → rdf:type classes whose instances may fill it (`slot_types.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotTypes(pub BTreeMap<String, Vec<String>>);

impl SlotTypes {
    pub fn load(path: &Path) -> Result<Self, PlanError> {
        read_json(path)
    }

    /// IRI-sorted candidate entities for a slot.
    pub fn candidates(&self, slot: &str, graph: &Graph) -> Vec<String> {
        let Some(classes) = self.0.get(slot) else {
            return Vec::new();
        };
        graph
            .instances_of(classes.iter().map(String::as_str))
            .into_iter()
            .filter_map(|t| t.as_iri().map(str::to_string))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatSpec {
    pub beat_tag: String,
    pub eligible_cqs: Vec<String>,
    pub cardinality: usize,
}

/// CQs a persona may draw for a beat tag, in id order.
pub fn beat_spec(library: &CqLibrary, persona_id: &str, beat_tag: &str) -> BeatSpec {
    BeatSpec {
        beat_tag: beat_tag.to_string(),
        eligible_cqs: library
            .templates()
            .iter()
            .filter(|t| t.has_beat(beat_tag) && t.for_persona(persona_id))
            .map(|t| t.id.clone())
            .collect(),
        cardinality: 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedBeat {
    pub beat_tag: String,
    pub bound_cq: BoundCq,
}

/// Ordered beat plan. Creation time is recorded in the run manifest, not here,
/// so equal plans serialize to equal bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatPlan {
    pub persona_id: String,
    pub length: LengthTier,
    pub seed: u64,
    pub beats: Vec<PlannedBeat>,
}

pub struct PlannerInputs<'a> {
    pub library: &'a CqLibrary,
    pub graph: &'a Graph,
    pub beats: &'a BeatTemplates,
    pub slot_types: &'a SlotTypes,
}

/// Draws one unused eligible CQ per beat, then one candidate entity per slot
/// (slots in name order), all from one SplitMix64 stream seeded with `seed`.
pub fn build_beat_plan(
    persona: &Persona,
    length: LengthTier,
    seed: u64,
    inputs: &PlannerInputs<'_>,
) -> Result<BeatPlan, PlanError> {
    let tags = inputs.beats.tags(length).ok_or(PlanError::NoBeatTemplate(length))?;
    let mut rng = SplitMix64::new(seed);
    let mut used: Vec<String> = Vec::new();
    let mut beats = Vec::with_capacity(tags.len());
    for tag in tags {
        let spec = beat_spec(inputs.library, &persona.id, tag);
        let eligible: Vec<&String> = spec.eligible_cqs.iter().filter(|id| !used.contains(id)).collect();
        let Some(&cq_id) = rng.choose(&eligible) else {
            log::error!("planning {} {length} seed {seed}: no eligible CQ for {tag:?}", persona.id);
            return Err(PlanError::NoEligibleCq(tag.clone()));
        };
        let template = inputs.library.get(cq_id).expect("eligible ids come from the library");
        let mut slots = template.slots.clone();
        slots.sort();
        let mut bindings = BTreeMap::new();
        for slot in slots {
            let candidates = inputs.slot_types.candidates(&slot, inputs.graph);
            let Some(iri) = rng.choose(&candidates) else {
                log::error!("planning {} {length} seed {seed}: no candidate for slot {slot}", persona.id);
                return Err(PlanError::NoCompatibleEntity(slot));
            };
            bindings.insert(slot, iri.clone());
        }
        let bound_cq = instantiate(inputs.library, cq_id, &bindings, inputs.graph)?;
        used.push(cq_id.clone());
        beats.push(PlannedBeat { beat_tag: tag.clone(), bound_cq });
    }
    Ok(BeatPlan { persona_id: persona.id.clone(), length, seed, beats })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    persona_id: String,
    length: LengthTier,
    seed: u64,
    beats: Vec<BeatDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeatDoc {
    beat_tag: String,
    cq_id: String,
    bindings: BTreeMap<String, String>,
    question: String,
}

/// Canonical JSON: sorted keys, two-space indentation, trailing newline.
pub fn serialize_plan(plan: &BeatPlan) -> String {
    let doc = PlanDoc {
        persona_id: plan.persona_id.clone(),
        length: plan.length,
        seed: plan.seed,
        beats: plan
            .beats
            .iter()
            .map(|b| BeatDoc {
                beat_tag: b.beat_tag.clone(),
                cq_id: b.bound_cq.template_id.clone(),
                bindings: b.bound_cq.bindings.clone(),
                question: b.bound_cq.question_text.clone(),
            })
            .collect(),
    };
    crate::canonical_json(&doc)
}

/// Parses planner output, re-binding each beat against `library`.
pub fn deserialize_plan(text: &str, library: &CqLibrary) -> Result<BeatPlan, PlanError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: PlanDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        if path == "." {
            path.clear();
        }
        let message = e.inner().to_string();
        if let Some(field) = missing_field(&message) {
            path = if path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        }
        PlanError::SchemaViolation { path, message }
    })?;
    let mut beats = Vec::with_capacity(doc.beats.len());
    for (i, b) in doc.beats.into_iter().enumerate() {
        let violation =
            |field: &str, message: String| PlanError::SchemaViolation { path: format!("beats[{i}].{field}"), message };
        let template = library.get(&b.cq_id).ok_or_else(|| violation("cq_id", format!("unknown CQ id {}", b.cq_id)))?;
        let bound_plan =
            template.plan.bind_parameters(&b.bindings).map_err(|e| violation("bindings", e.to_string()))?;
        beats.push(PlannedBeat {
            beat_tag: b.beat_tag,
            bound_cq: BoundCq {
                template_id: b.cq_id,
                bindings: b.bindings,
                question_text: b.question,
                bound_plan,
                needs_enrichment: template.needs_enrichment,
                query_file: template.query_file.clone(),
            },
        });
    }
    Ok(BeatPlan { persona_id: doc.persona_id, length: doc.length, seed: doc.seed, beats })
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// `plans/<persona>_<length>_<seed>.json`
pub fn plan_file_name(plan: &BeatPlan) -> String {
    format!("{}_{}_{}.json", plan.persona_id, plan.length, plan.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_tier_parsing() {
        assert_eq!("small".parse::<LengthTier>().unwrap(), LengthTier::Small);
        assert_eq!("Long".parse::<LengthTier>().unwrap(), LengthTier::Long);
        assert!("tiny".parse::<LengthTier>().is_err());
    }

    #[test]
    fn empty_plan_serializes() {
        let plan = BeatPlan { persona_id: "emma".into(), length: LengthTier::Small, seed: u64::MAX, beats: vec![] };
        let text = serialize_plan(&plan);
        assert!(text.contains("\"beats\": []"));
        assert!(text.contains("18446744073709551615"));
        let back = deserialize_plan(&text, &CqLibrary::default()).unwrap();
        assert_eq!(back, plan);
        assert_eq!(serialize_plan(&back), text);
    }

    #[test]
    fn missing_seed_is_named() {
        let err = deserialize_plan(r#"{"persona_id":"emma","length":"Small","beats":[]}"#, &CqLibrary::default())
            .unwrap_err();
        assert!(matches!(&err, PlanError::SchemaViolation { path, .. } if path == "seed"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let err = deserialize_plan(
            r#"{"persona_id":"emma","length":"Small","seed":1,"beats":[],"extra":true}"#,
            &CqLibrary::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::SchemaViolation { .. }));
    }

    #[test]
    fn unknown_cq_named() {
        let text = r#"{"persona_id":"emma","length":"Small","seed":1,"beats":[
            {"beat_tag":"Introduction","cq_id":"CQ-E99","bindings":{},"question":"?"}]}"#;
        let err = deserialize_plan(text, &CqLibrary::default()).unwrap_err();
        assert!(err.to_string().contains("CQ-E99"), "{err}");
    }

    #[test]
    fn persona_validation() {
        let mut p = Persona {
            id: "x".into(),
            name: "X".into(),
            tone: vec![],
            dos: String::new(),
            donts: String::new(),
            reading_level: "college".into(),
            target_words: BTreeMap::new(),
        };
        assert!(p.validate().is_err());
        p.tone.push("clear".into());
        assert!(p.validate().is_ok());
        p.reading_level = " ".into();
        assert!(p.validate().is_err());
    }
}
