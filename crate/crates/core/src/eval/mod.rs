//! Story metrics: sentence support, evidence coverage, Flesch Reading Ease,
//! local cohesion and a weighted global cohesion.
//!
//! Every token-based metric goes through [`crate::text::content_tokens`].

mod entities;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::StoryOutput;
use crate::kg::{local_name, Term};
use crate::retrieve::{EvidencePack, Factlet, Strategy};
use crate::text::{raw_tokens, segment_sentences, stopwords_sha256, syllables, token_set, words};

pub use entities::{extract_dates, EntityMatcher};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("section has no sentences")]
    EmptySection,
    #[error("no evidence to measure coverage against")]
    NoEvidence,
    #[error("text has no words")]
    EmptyText,
    #[error("story has {story} beats but {packs} evidence packs")]
    RunMismatch { story: usize, packs: usize },
    #[error("invalid metric config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportMode {
    Factlet,
    Triple,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalWeights {
    pub local: f64,
    pub entity_flow: f64,
    pub bridge: f64,
    pub temporal: f64,
    pub reference: f64,
}

impl Default for GlobalWeights {
    fn default() -> Self {
        GlobalWeights { local: 0.35, entity_flow: 0.25, bridge: 0.15, temporal: 0.15, reference: 0.10 }
    }
}

impl GlobalWeights {
    pub fn sum(&self) -> f64 {
        self.local + self.entity_flow + self.bridge + self.temporal + self.reference
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub support_jaccard_min: f64,
    pub support_min_shared_tokens: usize,
    pub local_cohesion_band: (f64, f64),
    pub global_weights: GlobalWeights,
    pub fre_coefficients: (f64, f64, f64),
    pub top_degree_entity_count: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            support_jaccard_min: 0.22,
            support_min_shared_tokens: 2,
            local_cohesion_band: (0.15, 0.65),
            global_weights: GlobalWeights::default(),
            fre_coefficients: (206.835, 1.015, 84.6),
            top_degree_entity_count: 10,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if (self.global_weights.sum() - 1.0).abs() > 1e-9 {
            return Err(EvalError::Config(format!("global weights sum to {}", self.global_weights.sum())));
        }
        if self.local_cohesion_band.0 >= self.local_cohesion_band.1 {
            return Err(EvalError::Config("local cohesion band lower bound must be below upper".into()));
        }
        Ok(())
    }
}

/// |a ∩ b| / |a ∪ b|, and 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Factlet-mode grounding of one sentence against one factlet.
pub fn factlet_supports(sentence: &BTreeSet<String>, factlet: &BTreeSet<String>, cfg: &MetricConfig) -> bool {
    sentence.intersection(factlet).count() >= cfg.support_min_shared_tokens
        && jaccard(sentence, factlet) >= cfg.support_jaccard_min
}

/// Ids (in order) of the factlets that ground `sentence`.
pub fn supporting_factlets(sentence: &str, factlets: &[Factlet], cfg: &MetricConfig) -> Vec<String> {
    let s = token_set(sentence);
    factlets.iter().filter(|f| factlet_supports(&s, &token_set(&f.text), cfg)).map(|f| f.id.clone()).collect()
}

fn term_label(term: &Term, pack: &EvidencePack) -> String {
    match term {
        Term::Literal(l) => l.value.clone(),
        Term::Iri { value } => pack.entities.get(value).cloned().unwrap_or_else(|| local_name(value).to_string()),
        Term::Blank { value } => value.clone(),
    }
}

pub fn sentence_supported(sentence: &str, pack: &EvidencePack, mode: SupportMode, cfg: &MetricConfig) -> bool {
    match mode {
        SupportMode::Factlet => !supporting_factlets(sentence, &pack.factlets, cfg).is_empty(),
        SupportMode::Triple => {
            let toks = raw_tokens(sentence);
            pack.triples.iter().any(|t| {
                EntityMatcher::label_occurs(&toks, &term_label(&t.subject, pack))
                    && EntityMatcher::label_occurs(&toks, &term_label(&t.object, pack))
            })
        }
        SupportMode::Fallback => EntityMatcher::new(&pack.entities).mentioned(sentence).len() >= 2,
    }
}

pub fn support_flags(sentences: &[String], pack: &EvidencePack, mode: SupportMode, cfg: &MetricConfig) -> Vec<bool> {
    sentences.iter().map(|s| sentence_supported(s, pack, mode, cfg)).collect()
}

/// Mean of per-sentence support flags.
pub fn support_ratio(
    sentences: &[String],
    pack: &EvidencePack,
    mode: SupportMode,
    cfg: &MetricConfig,
) -> Result<f64, EvalError> {
    if sentences.is_empty() {
        return Err(EvalError::EmptySection);
    }
    let flags = support_flags(sentences, pack, mode, cfg);
    Ok(flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

/// Factlet mode: share of factlets with ≥2 content tokens in the text.
/// Triple mode: share of the top-degree evidence entities named in the text.
/// Fallback mode uses the triple-mode definition over all pack entities.
pub fn coverage(text: &str, pack: &EvidencePack, mode: SupportMode, cfg: &MetricConfig) -> Result<f64, EvalError> {
    match mode {
        SupportMode::Factlet => {
            if pack.factlets.is_empty() {
                return Err(EvalError::NoEvidence);
            }
            let out = token_set(text);
            let hit = pack
                .factlets
                .iter()
                .filter(|f| token_set(&f.text).intersection(&out).count() >= cfg.support_min_shared_tokens)
                .count();
            Ok(hit as f64 / pack.factlets.len() as f64)
        }
        SupportMode::Triple | SupportMode::Fallback => {
            let top = top_degree_entities(pack, cfg.top_degree_entity_count);
            if top.is_empty() {
                return Err(EvalError::NoEvidence);
            }
            let toks = raw_tokens(text);
            let hit = top.iter().filter(|t| EntityMatcher::label_occurs(&toks, &term_label(t, pack))).count();
            Ok(hit as f64 / top.len() as f64)
        }
    }
}

/// Non-literal terms of the pack's triples ranked by incidence count
/// (ties in term order), first `n`.
pub fn top_degree_entities(pack: &EvidencePack, n: usize) -> Vec<Term> {
    let mut degree: BTreeMap<&Term, usize> = BTreeMap::new();
    for t in &pack.triples {
        for term in [&t.subject, &t.object] {
            if !term.is_literal() {
                *degree.entry(term).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&Term, usize)> = degree.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t.clone()).collect()
}

/// Flesch Reading Ease over segmented sentences and word runs.
pub fn fre(text: &str, cfg: &MetricConfig) -> Result<f64, EvalError> {
    let sentences = segment_sentences(text).len();
    let ws = words(text);
    if sentences == 0 || ws.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let syl: usize = ws.iter().map(|w| syllables(w)).sum();
    let (a, b, c) = cfg.fre_coefficients;
    let w = ws.len() as f64;
    Ok(a - b * (w / sentences as f64) - c * (syl as f64 / w))
}

/// Share of adjacent sentence pairs whose Jaccard lies inside the band; 0 for
/// fewer than two sentences.
pub fn local_cohesion(sentences: &[String], cfg: &MetricConfig) -> f64 {
    if sentences.len() < 2 {
        return 0.0;
    }
    let (lo, hi) = cfg.local_cohesion_band;
    let sets: Vec<_> = sentences.iter().map(|s| token_set(s)).collect();
    let inside = sets
        .windows(2)
        .filter(|w| {
            let j = jaccard(&w[0], &w[1]);
            lo <= j && j <= hi
        })
        .count();
    inside as f64 / (sentences.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubSignals {
    pub local_cohesion: f64,
    pub entity_flow: f64,
    pub bridge_rate: f64,
    pub temporal_consistency: f64,
    pub reference_stability: f64,
}

impl SubSignals {
    pub fn weighted(&self, w: &GlobalWeights) -> f64 {
        w.local * self.local_cohesion
            + w.entity_flow * self.entity_flow
            + w.bridge * self.bridge_rate
            + w.temporal * self.temporal_consistency
            + w.reference * self.reference_stability
    }
}

/// Discourse sub-signals over a story's non-suppressed sections.
///
/// - entity_flow: share of adjacent section pairs sharing a mentioned entity;
/// - bridge_rate: share of sections after the first whose opening sentence
///   mentions an entity from an earlier section;
/// - temporal_consistency: share of adjacent explicit dates in non-decreasing order;
/// - reference_stability: mean over entities mentioned at least twice of
///   1 − (surface forms − 1)/(mentions − 1).
///
/// Each is 1 when it has nothing to measure; local cohesion is the section mean.
pub fn sub_signals(sections: &[Vec<String>], matcher: &EntityMatcher, cfg: &MetricConfig) -> SubSignals {
    let local = if sections.is_empty() {
        0.0
    } else {
        sections.iter().map(|s| local_cohesion(s, cfg)).sum::<f64>() / sections.len() as f64
    };
    let mentioned: Vec<BTreeSet<String>> =
        sections.iter().map(|s| matcher.mentioned(&s.join(" ")).into_iter().collect()).collect();
    let entity_flow = ratio_or_one(mentioned.windows(2).map(|w| !w[0].is_disjoint(&w[1])));
    let bridge_rate = ratio_or_one((1..sections.len()).map(|j| {
        let earlier: BTreeSet<&String> = mentioned[..j].iter().flatten().collect();
        let opening = sections[j].first().map(|s| matcher.mentioned(s)).unwrap_or_default();
        opening.iter().any(|e| earlier.contains(e))
    }));
    let story_text = sections.iter().flatten().cloned().collect::<Vec<_>>().join(" ");
    let dates = extract_dates(&story_text);
    let temporal = ratio_or_one(dates.windows(2).map(|w| w[0] <= w[1]));
    let reference = {
        let stats = matcher.surface_stats(sections.iter().flatten());
        let scores: Vec<f64> = stats
            .values()
            .filter(|(mentions, _)| *mentions >= 2)
            .map(|(mentions, forms)| 1.0 - (*forms as f64 - 1.0) / (*mentions as f64 - 1.0))
            .collect();
        if scores.is_empty() {
            1.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    };
    SubSignals {
        local_cohesion: local,
        entity_flow,
        bridge_rate,
        temporal_consistency: temporal,
        reference_stability: reference,
    }
}

fn ratio_or_one(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hit += f as usize;
    }
    if n == 0 {
        1.0
    } else {
        hit as f64 / n as f64
    }
}

pub fn global_cohesion(sections: &[Vec<String>], matcher: &EntityMatcher, cfg: &MetricConfig) -> f64 {
    sub_signals(sections, matcher, cfg).weighted(&cfg.global_weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionEval {
    pub beat_index: usize,
    pub support_ratio: f64,
    pub coverage: Option<f64>,
    pub fre: f64,
    pub local_cohesion: f64,
    pub supported: Vec<bool>,
}

pub const NO_EVALUABLE_SECTIONS: &str = "no evaluable sections";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub persona: String,
    pub length: String,
    pub strategy: Strategy,
    pub mode: SupportMode,
    pub support_pct_mean: Option<f64>,
    pub coverage_pct_mean: Option<f64>,
    pub fre_mean: Option<f64>,
    pub local_cohesion_mean: Option<f64>,
    pub global_cohesion: Option<f64>,
    pub sub_signals: Option<SubSignals>,
    pub sections: Vec<SectionEval>,
    pub suppressed_beats: usize,
    pub flags: Vec<String>,
    pub stopwords_sha256: String,
}

impl MetricReport {
    pub fn evaluable(&self) -> bool {
        !self.sections.is_empty()
    }
}

/// Support/coverage mode per strategy: factlets for kg and hybrid, triples for graph.
pub fn default_mode(strategy: Strategy) -> SupportMode {
    match strategy {
        Strategy::Kg | Strategy::Hybrid => SupportMode::Factlet,
        Strategy::Graph => SupportMode::Triple,
    }
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores a generated story against its packs. Percentages and FRE are
/// rounded to 2 decimals, cohesion values to 4.
pub fn evaluate_run(
    run_id: &str,
    story: &StoryOutput,
    packs: &[EvidencePack],
    mode: SupportMode,
    cfg: &MetricConfig,
) -> Result<MetricReport, EvalError> {
    cfg.validate()?;
    if story.beats.len() != packs.len() {
        return Err(EvalError::RunMismatch { story: story.beats.len(), packs: packs.len() });
    }
    let mut sections = Vec::new();
    let mut texts = Vec::new();
    for (beat, pack) in story.beats.iter().zip(packs) {
        if beat.suppressed || beat.sentences.is_empty() {
            continue;
        }
        let text = beat.sentences.join(" ");
        let supported = support_flags(&beat.sentences, pack, mode, cfg);
        let support = supported.iter().filter(|f| **f).count() as f64 / supported.len() as f64;
        let cov = match coverage(&text, pack, mode, cfg) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("{run_id} beat {}: coverage skipped: {e}", beat.beat_index);
                None
            }
        };
        sections.push(SectionEval {
            beat_index: beat.beat_index,
            support_ratio: support,
            coverage: cov,
            fre: fre(&text, cfg)?,
            local_cohesion: local_cohesion(&beat.sentences, cfg),
            supported,
        });
        texts.push(beat.sentences.clone());
    }
    let mut entities = BTreeMap::new();
    for p in packs {
        entities.extend(p.entities.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    let matcher = EntityMatcher::new(&entities);
    let subs = (!texts.is_empty()).then(|| sub_signals(&texts, &matcher, cfg));
    let mut flags = Vec::new();
    if sections.is_empty() {
        flags.push(NO_EVALUABLE_SECTIONS.to_string());
    }
    Ok(MetricReport {
        run_id: run_id.to_string(),
        persona: story.persona_id.clone(),
        length: story.length.to_string(),
        strategy: story.strategy,
        mode,
        support_pct_mean: mean(sections.iter().map(|s| s.support_ratio)).map(|m| round_to(m * 100.0, 2)),
        coverage_pct_mean: mean(sections.iter().filter_map(|s| s.coverage)).map(|m| round_to(m * 100.0, 2)),
        fre_mean: mean(sections.iter().map(|s| s.fre)).map(|m| round_to(m, 2)),
        local_cohesion_mean: mean(sections.iter().map(|s| s.local_cohesion)).map(|m| round_to(m, 4)),
        global_cohesion: subs.map(|s| round_to(s.weighted(&cfg.global_weights), 4)),
        sub_signals: subs,
        suppressed_beats: story.beats.iter().filter(|b| b.suppressed).count(),
        sections,
        flags,
        stopwords_sha256: stopwords_sha256(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn fre_cat_sat() {
        let v = fre("The cat sat.", &MetricConfig::default()).unwrap();
        assert!((v - 119.19).abs() < 0.01, "{v}");
        assert_eq!(fre("", &MetricConfig::default()), Err(EvalError::EmptyText));
    }

    #[test]
    fn weights_sum_to_one() {
        assert!(MetricConfig::default().validate().is_ok());
        let mut cfg = MetricConfig::default();
        cfg.global_weights.local = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn weighted_examples() {
        let w = GlobalWeights::default();
        let s = |a, b, c, d, e| SubSignals {
            local_cohesion: a,
            entity_flow: b,
            bridge_rate: c,
            temporal_consistency: d,
            reference_stability: e,
        };
        assert!((s(1.0, 1.0, 1.0, 1.0, 1.0).weighted(&w) - 1.0).abs() < 1e-12);
        assert_eq!(s(0.0, 0.0, 0.0, 0.0, 0.0).weighted(&w), 0.0);
        assert!((s(1.0, 1.0, 0.0, 1.0, 1.0).weighted(&w) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn local_cohesion_band() {
        let cfg = MetricConfig::default();
        let same = vec!["Queen played Wembley".to_string(), "Queen played Wembley".to_string()];
        assert_eq!(local_cohesion(&same, &cfg), 0.0);
        let half = vec!["alpha beta gamma".to_string(), "beta gamma delta".to_string()];
        assert_eq!(local_cohesion(&half, &cfg), 1.0);
        assert_eq!(local_cohesion(&same[..1], &cfg), 0.0);
    }
}
