use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::eval::jaccard;
use crate::retrieve::EvidencePack;
use crate::text::{token_set, words};

use super::StoryOutput;

/// Query-variable aliases known to leak into generated text.
pub const DEFAULT_ALIASES: &[&str] = &["eventName", "locationName", "allWorkName"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintKind {
    AliasLeakage,
    IdentifierArtifact,
    FusionRisk,
    Repetition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub kind: LintKind,
    pub beat_index: usize,
    pub sentence_index: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct LintConfig {
    /// Alias tokens matched case-sensitively as whole words.
    pub aliases: BTreeSet<String>,
    /// KG local names; when non-empty, identifier artifacts must be one of these.
    pub local_names: BTreeSet<String>,
}

impl LintConfig {
    /// Default aliases plus any camel-cased query variables.
    pub fn with_variables<'a>(variables: impl IntoIterator<Item = &'a String>) -> Self {
        let mut aliases: BTreeSet<String> = DEFAULT_ALIASES.iter().map(|s| s.to_string()).collect();
        aliases.extend(variables.into_iter().filter(|v| is_lower_camel(v)).cloned());
        LintConfig { aliases, local_names: BTreeSet::new() }
    }
}

fn is_lower_camel(w: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z][a-z0-9]*(?:[A-Z][a-z0-9]+)+$").unwrap()).is_match(w)
}

fn is_upper_camel(w: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Z][a-z]{2,}(?:[A-Z][a-z0-9]+)+$").unwrap()).is_match(w)
}

/// Advisory checks; never changes the story.
pub fn lint_story(story: &StoryOutput, packs: &[EvidencePack], config: &LintConfig) -> Vec<LintFinding> {
    let mut out = Vec::new();
    for beat in &story.beats {
        for (si, sentence) in beat.sentences.iter().enumerate() {
            let finding =
                |kind, detail: String| LintFinding { kind, beat_index: beat.beat_index, sentence_index: si, detail };
            for w in words(sentence) {
                if config.aliases.contains(w) {
                    out.push(finding(LintKind::AliasLeakage, w.to_string()));
                } else if (is_upper_camel(w) || is_lower_camel(w))
                    && (config.local_names.is_empty() || config.local_names.contains(w))
                {
                    out.push(finding(LintKind::IdentifierArtifact, w.to_string()));
                }
            }
            if let (Some(pack), Some(ids)) = (packs.get(beat.beat_index), beat.evidence_map.get(si)) {
                let subjects: BTreeSet<String> = ids
                    .iter()
                    .filter_map(|id| pack.factlets.iter().find(|f| &f.id == id))
                    .filter_map(|f| pack.factlet_subject(f))
                    .collect();
                if subjects.len() > 2 {
                    out.push(finding(LintKind::FusionRisk, format!("{} subjects", subjects.len())));
                }
            }
        }
    }
    for pair in story.beats.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        'outer: for sa in &a.sentences {
            let ta = token_set(sa);
            for (si, sb) in b.sentences.iter().enumerate() {
                let j = jaccard(&ta, &token_set(sb));
                if j > 0.8 {
                    out.push(LintFinding {
                        kind: LintKind::Repetition,
                        beat_index: b.beat_index,
                        sentence_index: si,
                        detail: format!("repeats beat {} (Jaccard {j:.2})", a.beat_index),
                    });
                    break 'outer;
                }
            }
        }
    }
    out
}
