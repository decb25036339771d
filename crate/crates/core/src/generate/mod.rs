//! Evidence-closed generation: a deterministic content pass picks the
//! factlets for a beat, a text backend realises them, and every returned
//! sentence must be grounded in the chosen factlets or it is dropped.

mod backend;
mod lint;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::eval::{supporting_factlets, EntityMatcher, MetricConfig};
use crate::planner::{plan_file_name, BeatPlan, LengthTier, Persona};
use crate::retrieve::{EvidencePack, Factlet, Strategy};
use crate::text::{raw_tokens, segment_sentences};

pub use backend::{CallLimiter, HttpBackend, MockBackend, TextBackend, API_KEY_ENV};
pub use lint::{lint_story, LintConfig, LintFinding, LintKind, DEFAULT_ALIASES};

pub const MAX_SENTENCES: usize = 3;
pub const DEFAULT_MIN_FACTS: usize = 1;
pub const DEFAULT_BUDGET: usize = 6;
pub const UNGROUNDED: &str = "ungrounded output";

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt of {len} chars exceeds backend limit of {limit}")]
    BackendOverflow { len: usize, limit: usize },
    #[error("prompt template: {0}")]
    Prompt(String),
    #[error("plan has {beats} beats but {packs} evidence packs")]
    PackMismatch { beats: usize, packs: usize },
    #[error("resume state does not match this plan: {0}")]
    Resume(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleDirectives {
    pub tone: Vec<String>,
    pub sentence_count: usize,
    pub reading_level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroOutline {
    pub beat_index: usize,
    pub ordered_facts: Vec<Factlet>,
    pub style: StyleDirectives,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatText {
    pub beat_index: usize,
    pub beat_tag: String,
    pub cq_id: String,
    pub sentences: Vec<String>,
    /// Per sentence, the ids of the pack factlets that ground it.
    pub evidence_map: Vec<Vec<String>>,
    pub suppressed: bool,
    pub suppression_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_sentences: Vec<String>,
}

impl BeatText {
    pub fn suppressed(beat_index: usize, reason: String) -> Self {
        BeatText {
            beat_index,
            beat_tag: String::new(),
            cq_id: String::new(),
            sentences: Vec::new(),
            evidence_map: Vec::new(),
            suppressed: true,
            suppression_reason: Some(reason),
            dropped_sentences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryOutput {
    pub plan_ref: String,
    pub persona_id: String,
    pub length: LengthTier,
    pub seed: u64,
    pub strategy: Strategy,
    pub backend_id: String,
    pub backend_params: BTreeMap<String, Value>,
    pub beats: Vec<BeatText>,
    pub complete: bool,
}

impl StoryOutput {
    pub fn sentence_count(&self) -> usize {
        self.beats.iter().map(|b| b.sentences.len()).sum()
    }

    pub fn text(&self) -> String {
        self.beats.iter().filter(|b| !b.suppressed).map(|b| b.sentences.join(" ")).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub min_facts: usize,
    pub budget: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { min_facts: DEFAULT_MIN_FACTS, budget: DEFAULT_BUDGET }
    }
}

const PLACEHOLDERS: &[&str] = &["persona_name", "tone", "reading_level", "dos", "donts", "sentence_budget", "factlets"];

/// Surface prompt with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate(String);

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate(include_str!("surface_prompt.txt").to_string())
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, GenerateError> {
        let text = text.into();
        let mut rest = text.as_str();
        while let Some(start) = rest.find('{') {
            let end = rest[start..].find('}').ok_or_else(|| GenerateError::Prompt("unclosed placeholder".into()))?;
            let name = &rest[start + 1..start + end];
            if !PLACEHOLDERS.contains(&name) {
                return Err(GenerateError::Prompt(format!("unknown placeholder {{{name}}}")));
            }
            rest = &rest[start + end + 1..];
        }
        if !text.contains("{factlets}") {
            return Err(GenerateError::Prompt("template lacks {factlets}".into()));
        }
        Ok(PromptTemplate(text))
    }

    pub fn load(path: &Path) -> Result<Self, GenerateError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GenerateError::Prompt(format!("{}: {e}", path.display())))?;
        Self::new(text)
    }

    pub fn render(&self, outline: &MicroOutline, persona: &Persona) -> String {
        let facts: Vec<String> = outline.ordered_facts.iter().map(|f| format!("[{}] {}", f.id, f.text)).collect();
        self.0
            .replace("{persona_name}", &persona.name)
            .replace("{tone}", &outline.style.tone.join(", "))
            .replace("{reading_level}", &outline.style.reading_level)
            .replace("{dos}", &persona.dos)
            .replace("{donts}", &persona.donts)
            .replace("{sentence_budget}", &outline.style.sentence_count.to_string())
            .replace("{factlets}", &facts.join("\n"))
    }
}

/// Number of distinct bound entities whose label occurs in the factlet.
fn bound_mentions(pack: &EvidencePack, factlet: &Factlet) -> usize {
    let toks = raw_tokens(&factlet.text);
    pack.bound_entities
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|iri| pack.entities.get(*iri).is_some_and(|label| EntityMatcher::label_occurs(&toks, label)))
        .count()
}

/// Picks up to `budget` factlets by salience (bound entities mentioned, then
/// snippet-backed first, then pack order) and returns them in pack order.
pub fn content_pass(pack: &EvidencePack, persona: &Persona, budget: usize) -> MicroOutline {
    let mut ranked: Vec<(usize, usize, bool)> =
        pack.factlets.iter().enumerate().map(|(i, f)| (i, bound_mentions(pack, f), f.is_snippet_backed())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked.into_iter().take(budget).map(|r| r.0).collect();
    chosen.sort_unstable();
    let ordered_facts: Vec<Factlet> = chosen.into_iter().map(|i| pack.factlets[i].clone()).collect();
    MicroOutline {
        beat_index: pack.beat_index,
        style: StyleDirectives {
            tone: persona.tone.clone(),
            sentence_count: ordered_facts.len().clamp(1, MAX_SENTENCES),
            reading_level: persona.reading_level.clone(),
        },
        ordered_facts,
    }
}

/// Prompts the backend, keeps the first grounded sentences (at most three)
/// and suppresses the beat when none survive. A prompt overflow halves the
/// outline once before giving up.
pub fn surface_pass(
    outline: &MicroOutline,
    persona: &Persona,
    backend: &dyn TextBackend,
    prompt: &PromptTemplate,
    metric: &MetricConfig,
) -> Result<BeatText, GenerateError> {
    let mut outline = outline.clone();
    let raw = match backend.complete(&prompt.render(&outline, persona)) {
        Err(GenerateError::BackendOverflow { .. }) if outline.ordered_facts.len() > 1 => {
            let keep = outline.ordered_facts.len() / 2;
            log::warn!("beat {}: prompt overflow, retrying with {keep} facts", outline.beat_index);
            outline.ordered_facts.truncate(keep);
            outline.style.sentence_count = keep.clamp(1, MAX_SENTENCES);
            backend.complete(&prompt.render(&outline, persona))?
        }
        other => other?,
    };
    let mut beat = BeatText::suppressed(outline.beat_index, String::new());
    for sentence in segment_sentences(&raw) {
        let evidence = supporting_factlets(&sentence, &outline.ordered_facts, metric);
        if evidence.is_empty() {
            log::info!("beat {}: dropped ungrounded sentence {sentence:?}", outline.beat_index);
            beat.dropped_sentences.push(sentence);
        } else if beat.sentences.len() < MAX_SENTENCES {
            beat.sentences.push(sentence);
            beat.evidence_map.push(evidence);
        }
    }
    if beat.sentences.is_empty() {
        log::info!("beat {}: suppressed, {UNGROUNDED}", outline.beat_index);
        beat.suppression_reason = Some(UNGROUNDED.to_string());
    } else {
        beat.suppressed = false;
        beat.suppression_reason = None;
    }
    Ok(beat)
}

pub fn generate_beat(
    pack: &EvidencePack,
    persona: &Persona,
    backend: &dyn TextBackend,
    prompt: &PromptTemplate,
    config: &GeneratorConfig,
    metric: &MetricConfig,
) -> Result<BeatText, GenerateError> {
    let n = pack.factlets.len();
    let mut beat = if n < config.min_facts || n == 0 {
        let reason = format!("sparse evidence ({n} factlets)");
        log::info!("beat {}: suppressed, {reason}", pack.beat_index);
        BeatText::suppressed(pack.beat_index, reason)
    } else {
        surface_pass(&content_pass(pack, persona, config.budget), persona, backend, prompt, metric)?
    };
    beat.cq_id = pack.cq_id.clone();
    Ok(beat)
}

/// Everything a story needs besides the backend.
pub struct StoryRequest<'a> {
    pub plan: &'a BeatPlan,
    pub packs: &'a [EvidencePack],
    pub persona: &'a Persona,
    pub strategy: Strategy,
    pub prompt: &'a PromptTemplate,
    pub config: &'a GeneratorConfig,
    pub metric: &'a MetricConfig,
}

/// Generates beats in plan order. Beats already present in `resume` are
/// kept; `checkpoint` sees the partial story after every new beat.
pub fn generate_story(
    req: &StoryRequest<'_>,
    backend: &dyn TextBackend,
    resume: Option<StoryOutput>,
    checkpoint: &mut dyn FnMut(&StoryOutput),
) -> Result<StoryOutput, GenerateError> {
    let plan = req.plan;
    if plan.beats.len() != req.packs.len() {
        return Err(GenerateError::PackMismatch { beats: plan.beats.len(), packs: req.packs.len() });
    }
    let mut story = StoryOutput {
        plan_ref: plan_file_name(plan),
        persona_id: plan.persona_id.clone(),
        length: plan.length,
        seed: plan.seed,
        strategy: req.strategy,
        backend_id: backend.id(),
        backend_params: backend.params(),
        beats: Vec::new(),
        complete: false,
    };
    if let Some(prev) = resume {
        if prev.plan_ref != story.plan_ref || prev.strategy != story.strategy || prev.beats.len() > plan.beats.len() {
            return Err(GenerateError::Resume(format!("{} / {}", prev.plan_ref, prev.strategy)));
        }
        story.beats = prev.beats;
    }
    for (i, (planned, pack)) in plan.beats.iter().zip(req.packs).enumerate().skip(story.beats.len()) {
        let mut beat = generate_beat(pack, req.persona, backend, req.prompt, req.config, req.metric)?;
        beat.beat_index = i;
        beat.beat_tag = planned.beat_tag.clone();
        beat.cq_id = planned.bound_cq.template_id.clone();
        story.beats.push(beat);
        checkpoint(&story);
    }
    story.complete = true;
    Ok(story)
}
