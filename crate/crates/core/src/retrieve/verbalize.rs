use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg::{local_name, vocab, Graph, Term, Triple};
use crate::text::split_camel;

use super::RetrieveError;

/// Text templates for factlets. Predicate templates use `{s}` and `{o}`;
/// row templates use `{column}`, `{slot:name}` and `[optional ...]` segments
/// that vanish when any placeholder inside them is unbound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verbalizer {
    #[serde(default)]
    pub predicates: BTreeMap<String, String>,
    #[serde(default)]
    pub rows: BTreeMap<String, String>,
}

impl Verbalizer {
    pub fn load(path: &Path) -> Result<Self, RetrieveError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RetrieveError::Config(format!("{}: {e}", path.display())))?;
        let mut v: Verbalizer =
            serde_json::from_str(&text).map_err(|e| RetrieveError::Config(format!("{}: {e}", path.display())))?;
        v.predicates = v.predicates.into_iter().map(|(k, t)| (vocab::expand_curie(&k), t)).collect();
        Ok(v)
    }

    /// One factlet text for a triple.
    pub fn triple(&self, triple: &Triple, graph: &Graph) -> String {
        let s = graph.display_label(&triple.subject);
        let o = graph.display_label(&triple.object);
        match triple.predicate.as_iri().and_then(|p| self.predicates.get(p)) {
            Some(template) => template.replace("{s}", &s).replace("{o}", &o),
            None => generic_triple(&s, triple.predicate.value(), &o),
        }
    }

    /// One factlet text for a result row; `None` when nothing renders.
    pub fn row(
        &self,
        cq_id: &str,
        columns: &[String],
        row: &[Option<Term>],
        bindings: &BTreeMap<String, String>,
        graph: &Graph,
    ) -> Option<String> {
        let lookup = |name: &str| -> Option<String> {
            if let Some(slot) = name.strip_prefix("slot:") {
                return bindings.get(slot).map(|iri| graph.display_label(&Term::iri(iri.as_str())));
            }
            let i = columns.iter().position(|c| c == name)?;
            row.get(i)?.as_ref().map(|t| graph.display_label(t))
        };
        let rendered = self.rows.get(cq_id).and_then(|t| render_row(t, &lookup));
        let text = rendered
            .unwrap_or_else(|| row.iter().flatten().map(|t| graph.display_label(t)).collect::<Vec<_>>().join(", "));
        let text = text.trim().to_string();
        (!text.is_empty()).then_some(text)
    }
}

/// "<subject>'s <predicate words> was <object>", camelCase predicates split into words.
pub fn generic_triple(subject: &str, predicate_iri: &str, object: &str) -> String {
    let words = split_camel(local_name(predicate_iri)).to_lowercase();
    format!("{subject}'s {words} was {object}")
}

enum Piece {
    Text(String),
    Hole(String),
    Optional(Vec<Piece>),
}

fn parse_template(t: &str) -> Vec<Piece> {
    fn parse(chars: &mut std::iter::Peekable<std::str::Chars>, nested: bool) -> Vec<Piece> {
        let mut out = Vec::new();
        let mut text = String::new();
        while let Some(c) = chars.next() {
            match c {
                '{' => {
                    if !text.is_empty() {
                        out.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    let name: String = chars.by_ref().take_while(|&c| c != '}').collect();
                    out.push(Piece::Hole(name));
                }
                '[' => {
                    if !text.is_empty() {
                        out.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    out.push(Piece::Optional(parse(chars, true)));
                }
                ']' if nested => break,
                _ => text.push(c),
            }
        }
        if !text.is_empty() {
            out.push(Piece::Text(text));
        }
        out
    }
    parse(&mut t.chars().peekable(), false)
}

fn render_row(template: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Option<String> {
    fn render(pieces: &[Piece], lookup: &dyn Fn(&str) -> Option<String>) -> Option<String> {
        let mut out = String::new();
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Hole(name) => out.push_str(&lookup(name)?),
                Piece::Optional(inner) => {
                    if let Some(s) = render(inner, lookup) {
                        out.push_str(&s);
                    }
                }
            }
        }
        Some(out)
    }
    render(&parse_template(template), lookup)
}
