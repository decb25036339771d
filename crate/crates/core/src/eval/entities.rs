use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use crate::kg::local_name;
use crate::text::{contains_phrase, count_phrase, raw_tokens, split_camel};

/// Finds entity mentions by label, by camel-split label and by the
/// camel-split IRI local name, all as contiguous lowercase token runs.
#[derive(Debug, Clone, Default)]
pub struct EntityMatcher {
    entries: Vec<(String, Vec<Vec<String>>)>,
}

impl EntityMatcher {
    pub fn new(entities: &BTreeMap<String, String>) -> Self {
        let entries = entities
            .iter()
            .map(|(iri, label)| {
                let mut forms: Vec<Vec<String>> = Vec::new();
                for f in [label.clone(), split_camel(label), split_camel(local_name(iri))] {
                    let toks = raw_tokens(&f);
                    if !toks.is_empty() && !forms.contains(&toks) {
                        forms.push(toks);
                    }
                }
                (iri.clone(), forms)
            })
            .filter(|(_, forms)| !forms.is_empty())
            .collect();
        EntityMatcher { entries }
    }

    /// Whether `label` (or its camel-split form) occurs in `tokens`.
    pub fn label_occurs(tokens: &[String], label: &str) -> bool {
        contains_phrase(tokens, &raw_tokens(label)) || contains_phrase(tokens, &raw_tokens(&split_camel(label)))
    }

    /// IRIs of entities mentioned in `text`.
    pub fn mentioned(&self, text: &str) -> BTreeSet<String> {
        let toks = raw_tokens(text);
        self.entries
            .iter()
            .filter(|(_, forms)| forms.iter().any(|f| contains_phrase(&toks, f)))
            .map(|(iri, _)| iri.clone())
            .collect()
    }

    /// Per entity: (total mentions, distinct surface forms used).
    pub fn surface_stats<'a>(&self, sentences: impl Iterator<Item = &'a String>) -> BTreeMap<String, (usize, usize)> {
        let token_lists: Vec<Vec<String>> = sentences.map(|s| raw_tokens(s)).collect();
        let mut out = BTreeMap::new();
        for (iri, forms) in &self.entries {
            let mut mentions = 0;
            let mut used = 0;
            for f in forms {
                let n: usize = token_lists.iter().map(|t| count_phrase(t, f)).sum();
                mentions += n;
                used += (n > 0) as usize;
            }
            if mentions > 0 {
                out.insert(iri.clone(), (mentions, used));
            }
        }
        out
    }
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_lowercase();
    MONTHS.iter().position(|m| *m == lower).map(|i| i as u32 + 1)
}

fn date_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let months = "January|February|March|April|May|June|July|August|September|October|November|December";
        Regex::new(&format!(
            r"\b(?P<iy>\d{{4}})-(?P<im>\d{{2}})-(?P<id>\d{{2}})|\b(?P<dd>\d{{1,2}}) (?P<dm>{months}) (?P<dy>\d{{4}})\b|\b(?P<mm>{months}) (?P<md>\d{{1,2}}),? (?P<my>\d{{4}})\b"
        ))
        .expect("date pattern")
    })
}

/// Explicit calendar dates in text order, as (year, month, day).
pub fn extract_dates(text: &str) -> Vec<(i32, u32, u32)> {
    let num = |c: &regex::Captures, n: &str| c.name(n).and_then(|m| m.as_str().parse::<u32>().ok());
    date_regex()
        .captures_iter(text)
        .filter_map(|c| {
            if let Some(y) = num(&c, "iy") {
                Some((y as i32, num(&c, "im")?, num(&c, "id")?))
            } else if let Some(y) = num(&c, "dy") {
                Some((y as i32, month_number(c.name("dm")?.as_str())?, num(&c, "dd")?))
            } else {
                Some((num(&c, "my")? as i32, month_number(c.name("mm")?.as_str())?, num(&c, "md")?))
            }
        })
        .collect()
}
