use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kg::{vocab, Graph, Term, TermId, Triple};
use crate::rng::SplitMix64;

use super::RetrieveError;

/// Predicates followed by neighbourhood expansion unless configured otherwise.
pub const DEFAULT_ALLOWLIST: &[&str] = &[
    "schema:performer",
    "schema:location",
    "schema:startDate",
    "schema:endDate",
    "schema:name",
    "mm:involvesMusicEnsemble",
    "mm:involvesMemberOfMusicEnsemble",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRagConfig {
    pub relation_allowlist: BTreeSet<String>,
    pub hop_limit: u8,
    pub node_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GraphRagConfig {
    fn default() -> Self {
        GraphRagConfig {
            relation_allowlist: DEFAULT_ALLOWLIST.iter().map(|c| vocab::expand_curie(c)).collect(),
            hop_limit: 2,
            node_cap: 30,
            seed: 0,
        }
    }
}

impl GraphRagConfig {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(1..=2).contains(&self.hop_limit) {
            return Err(RetrieveError::Config(format!("hop_limit must be 1 or 2, got {}", self.hop_limit)));
        }
        Ok(())
    }

    /// Allowlist entries may be CURIEs; this returns full IRIs.
    pub fn expanded(mut self) -> Self {
        self.relation_allowlist = self.relation_allowlist.iter().map(|c| vocab::expand_curie(c)).collect();
        self
    }
}

/// Breadth-first expansion from `seeds` over allowlisted predicates (IRIs or
/// CURIEs) in both directions. Returns each reached triple with the hop at which it was
/// first added, ordered by (hop, triple). New nodes beyond `node_cap` are
/// dropped by a seeded draw over the IRI-sorted layer, together with the
/// triples that reach them.
pub fn expand(graph: &Graph, seeds: &[Term], config: &GraphRagConfig) -> Result<Vec<(u8, Triple)>, RetrieveError> {
    config.validate()?;
    let predicates: Vec<TermId> =
        config.relation_allowlist.iter().filter_map(|p| graph.term_id(&Term::iri(vocab::expand_curie(p)))).collect();
    if predicates.is_empty() {
        return Err(RetrieveError::EmptyNeighbourhood);
    }
    let mut rng = SplitMix64::new(config.seed);
    let mut frontier: Vec<TermId> = {
        let mut ids: Vec<TermId> = seeds.iter().filter_map(|s| graph.term_id(s)).collect();
        ids.sort_by(|a, b| graph.term(*a).cmp(graph.term(*b)));
        ids.dedup();
        ids
    };
    let mut visited: BTreeSet<TermId> = frontier.iter().copied().collect();
    let mut reached: BTreeMap<Triple, u8> = BTreeMap::new();
    for hop in 1..=config.hop_limit {
        let mut settled: Vec<[TermId; 3]> = Vec::new();
        let mut layer: BTreeMap<TermId, Vec<[TermId; 3]>> = BTreeMap::new();
        for &node in &frontier {
            for &p in &predicates {
                let outgoing = graph.match_ids(Some(node), Some(p), None).map(|t| (t, t[2]));
                let incoming = graph.match_ids(None, Some(p), Some(node)).map(|t| (t, t[0]));
                for (t, other) in outgoing.chain(incoming) {
                    if visited.contains(&other) || graph.term(other).is_literal() {
                        settled.push(t);
                    } else {
                        layer.entry(other).or_default().push(t);
                    }
                }
            }
        }
        let mut candidates: Vec<TermId> = layer.keys().copied().collect();
        candidates.sort_by(|a, b| graph.term(*a).cmp(graph.term(*b)));
        let room = config.node_cap.saturating_sub(visited.len());
        let kept: Vec<TermId> = if candidates.len() > room {
            rng.sample_indices(candidates.len(), room).into_iter().map(|i| candidates[i]).collect()
        } else {
            candidates
        };
        for t in settled.into_iter().chain(kept.iter().flat_map(|n| layer[n].iter().copied())) {
            reached.entry(graph.decode(t)).or_insert(hop);
        }
        visited.extend(kept.iter().copied());
        frontier = kept;
        if frontier.is_empty() {
            break;
        }
    }
    if reached.is_empty() {
        return Err(RetrieveError::EmptyNeighbourhood);
    }
    let mut out: Vec<(u8, Triple)> = reached.into_iter().map(|(t, h)| (h, t)).collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(l: &str) -> Term {
        Term::iri(format!("http://e/{l}"))
    }

    fn config(preds: &[&str], hop: u8, cap: usize) -> GraphRagConfig {
        GraphRagConfig {
            relation_allowlist: preds.iter().map(|p| format!("http://e/{p}")).collect(),
            hop_limit: hop,
            node_cap: cap,
            seed: 1,
        }
    }

    fn chain() -> Graph {
        Graph::from_triples([
            Triple::new(iri("a"), iri("p"), iri("b")),
            Triple::new(iri("b"), iri("p"), iri("c")),
            Triple::new(iri("c"), iri("p"), iri("d")),
            Triple::new(iri("x"), iri("q"), iri("a")),
        ])
    }

    #[test]
    fn hop_limit_bounds_reach() {
        let g = chain();
        let one = expand(&g, &[iri("a")], &config(&["p"], 1, 10)).unwrap();
        assert_eq!(one.len(), 1);
        let two = expand(&g, &[iri("b")], &config(&["p"], 2, 10)).unwrap();
        assert_eq!(two.len(), 3);
        assert!(two.iter().all(|(h, _)| *h <= 2));
    }

    #[test]
    fn empty_allowlist_or_isolated_seed() {
        let g = chain();
        assert!(matches!(expand(&g, &[iri("a")], &config(&[], 1, 10)), Err(RetrieveError::EmptyNeighbourhood)));
        assert!(matches!(expand(&g, &[iri("x")], &config(&["p"], 2, 10)), Err(RetrieveError::EmptyNeighbourhood)));
    }

    #[test]
    fn node_cap_truncates_deterministically() {
        let mut triples = Vec::new();
        for i in 0..10 {
            triples.push(Triple::new(iri("hub"), iri("p"), iri(&format!("n{i}"))));
        }
        let g = Graph::from_triples(triples);
        let a = expand(&g, &[iri("hub")], &config(&["p"], 1, 4)).unwrap();
        let b = expand(&g, &[iri("hub")], &config(&["p"], 1, 4)).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn hop_limit_validated() {
        assert!(config(&["p"], 3, 1).validate().is_err());
        assert!(config(&["p"], 0, 1).validate().is_err());
    }
}
