//! Evidence retrieval for one bound CQ under three strategies, all producing
//! the same [`EvidencePack`] schema:
//!
//! - `kg`: the CQ's query answers, capped, one factlet per result row;
//! - `hybrid`: as `kg`, plus top-k cached snippets when the CQ asks for enrichment;
//! - `graph`: an allowlisted, hop-bounded neighbourhood of the bound entities,
//!   one factlet per triple.

mod graph_rag;
mod snippets;
mod verbalize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::BoundCq;
use crate::kg::{Graph, Term, Triple};
use crate::query::{execute, QueryError, ResultTable};

pub use graph_rag::{expand, GraphRagConfig, DEFAULT_ALLOWLIST};
pub use snippets::{build_snippet_index, Snippet, SnippetIndex};
pub use verbalize::{generic_triple, Verbalizer};

pub const DEFAULT_CAP: usize = 25;
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("beat {beat_index} ({cq_id}): {source}")]
    Query { beat_index: usize, cq_id: String, source: QueryError },
    #[error("snippet {0} lacks source_url or access_date")]
    MissingProvenance(String),
    #[error("no allowlisted edges around the seed entities")]
    EmptyNeighbourhood,
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Kg,
    Hybrid,
    Graph,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Kg, Strategy::Hybrid, Strategy::Graph];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Kg => "kg",
            Strategy::Hybrid => "hybrid",
            Strategy::Graph => "graph",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kg" | "kg-rag" => Ok(Strategy::Kg),
            "hybrid" | "hybrid-rag" => Ok(Strategy::Hybrid),
            "graph" | "graph-rag" => Ok(Strategy::Graph),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

/// Reference from a factlet to the pack item it verbalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemRef {
    Triple(usize),
    Snippet(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factlet {
    pub id: String,
    pub text: String,
    pub supporting_items: Vec<ItemRef>,
}

impl Factlet {
    pub fn is_snippet_backed(&self) -> bool {
        self.supporting_items.iter().any(|i| matches!(i, ItemRef::Snippet(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Query { cq_id: String, query_file: String },
    Snippet { snippet_id: String, source_url: String, access_date: String },
    Expansion { seeds: Vec<String>, hop_limit: u8, node_cap: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidencePack {
    pub beat_index: usize,
    pub cq_id: String,
    pub strategy: Strategy,
    pub question: String,
    pub bound_entities: Vec<String>,
    pub triples: Vec<Triple>,
    pub result_rows: ResultTable,
    pub snippets: Vec<Snippet>,
    pub factlets: Vec<Factlet>,
    pub provenance: Vec<Provenance>,
    /// IRI → display label for every entity in the pack.
    pub entities: BTreeMap<String, String>,
    pub sparse: bool,
}

impl EvidencePack {
    /// A pack with no evidence, used for empty results and empty neighbourhoods.
    pub fn empty(beat_index: usize, cq: &BoundCq, strategy: Strategy, graph: &Graph) -> Self {
        let mut pack = EvidencePack {
            beat_index,
            cq_id: cq.template_id.clone(),
            strategy,
            question: cq.question_text.clone(),
            bound_entities: cq.bindings.values().cloned().collect(),
            triples: Vec::new(),
            result_rows: ResultTable::default(),
            snippets: Vec::new(),
            factlets: Vec::new(),
            provenance: Vec::new(),
            entities: BTreeMap::new(),
            sparse: true,
        };
        pack.refresh_entities(graph);
        pack
    }

    fn refresh_entities(&mut self, graph: &Graph) {
        let mut iris: BTreeSet<String> = self.bound_entities.iter().cloned().collect();
        for t in &self.triples {
            for term in [&t.subject, &t.object] {
                if let Some(iri) = term.as_iri() {
                    iris.insert(iri.to_string());
                }
            }
        }
        for s in &self.snippets {
            iris.extend(s.entity_iris.iter().filter(|i| graph.mentions(&Term::iri(i.as_str()))).cloned());
        }
        self.entities = iris
            .into_iter()
            .map(|iri| {
                let label = graph.display_label(&Term::iri(iri.as_str()));
                (iri, label)
            })
            .collect();
        self.sparse = self.factlets.is_empty();
    }

    /// Subject term of the item a factlet rests on, for fusion checks.
    pub fn factlet_subject(&self, factlet: &Factlet) -> Option<String> {
        factlet.supporting_items.iter().find_map(|item| match item {
            ItemRef::Triple(i) => self.triples.get(*i).map(|t| t.subject.to_string()),
            ItemRef::Snippet(i) => self.snippets.get(*i).map(|s| format!("snippet:{}", s.id)),
        })
    }

    /// Compact single-line JSON with sorted keys, as written to `packs.jsonl`.
    pub fn to_json_line(&self) -> String {
        let value = serde_json::to_value(self).expect("serializable pack");
        serde_json::to_string(&value).expect("JSON value")
    }
}

/// Shared read-only inputs for retrieval.
pub struct RetrievalContext<'a> {
    pub graph: &'a Graph,
    pub verbalizer: &'a Verbalizer,
    pub snippets: &'a SnippetIndex,
    pub cap: usize,
    pub k: usize,
    pub graph_rag: &'a GraphRagConfig,
}

fn query_provenance(cq: &BoundCq) -> Provenance {
    let file = cq.query_file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Provenance::Query { cq_id: cq.template_id.clone(), query_file: format!("queries/{file}") }
}

/// Runs the bound query and keeps rows in order until `cap` triples are held.
/// A row is kept when at least one of its witness triples fits; its factlet
/// cites the kept witnesses.
pub fn retrieve_kg(
    beat_index: usize,
    cq: &BoundCq,
    graph: &Graph,
    verbalizer: &Verbalizer,
    cap: usize,
) -> Result<EvidencePack, RetrieveError> {
    let table = execute(&cq.bound_plan, graph).map_err(|source| RetrieveError::Query {
        beat_index,
        cq_id: cq.template_id.clone(),
        source,
    })?;
    let mut pack = EvidencePack::empty(beat_index, cq, Strategy::Kg, graph);
    pack.provenance.push(query_provenance(cq));
    let mut index: HashMap<Triple, usize> = HashMap::new();
    let mut kept_rows = ResultTable { columns: table.columns.clone(), ..Default::default() };
    for (row, witness) in table.rows.iter().zip(&table.witnesses) {
        if pack.triples.len() >= cap && witness.iter().all(|t| !index.contains_key(t)) {
            break;
        }
        let mut support = Vec::new();
        for t in witness {
            if let Some(&i) = index.get(t) {
                support.push(ItemRef::Triple(i));
            } else if pack.triples.len() < cap {
                index.insert(t.clone(), pack.triples.len());
                support.push(ItemRef::Triple(pack.triples.len()));
                pack.triples.push(t.clone());
            }
        }
        support.sort();
        support.dedup();
        if support.is_empty() {
            log::debug!("beat {beat_index} ({}): row without witnesses skipped", cq.template_id);
            continue;
        }
        kept_rows.rows.push(row.clone());
        kept_rows.witnesses.push(witness.clone());
        if let Some(text) = verbalizer.row(&cq.template_id, &table.columns, row, &cq.bindings, graph) {
            let id = format!("F{}", pack.factlets.len() + 1);
            pack.factlets.push(Factlet { id, text, supporting_items: support });
        }
    }
    pack.result_rows = kept_rows;
    pack.refresh_entities(graph);
    Ok(pack)
}

/// KG-RAG plus, for enrichment-flagged CQs, the `k` best snippets for the
/// realised question, each verbalized as its own factlet.
pub fn retrieve_hybrid(
    beat_index: usize,
    cq: &BoundCq,
    graph: &Graph,
    verbalizer: &Verbalizer,
    index: &SnippetIndex,
    k: usize,
    cap: usize,
) -> Result<EvidencePack, RetrieveError> {
    let mut pack = retrieve_kg(beat_index, cq, graph, verbalizer, cap)?;
    pack.strategy = Strategy::Hybrid;
    if cq.needs_enrichment {
        for snippet in index.search(&cq.question_text, k) {
            let i = pack.snippets.len();
            pack.provenance.push(Provenance::Snippet {
                snippet_id: snippet.id.clone(),
                source_url: snippet.source_url.clone(),
                access_date: snippet.access_date.clone(),
            });
            let id = format!("F{}", pack.factlets.len() + 1);
            let text = snippet.text.trim().trim_end_matches(['.', '!', '?']).to_string();
            pack.factlets.push(Factlet { id, text, supporting_items: vec![ItemRef::Snippet(i)] });
            pack.snippets.push(snippet);
        }
        pack.refresh_entities(graph);
    }
    Ok(pack)
}

/// Neighbourhood of the bound entities, nearest hops first up to `cap`
/// triples, then sorted canonically with one factlet per triple.
pub fn retrieve_graph(
    beat_index: usize,
    cq: &BoundCq,
    graph: &Graph,
    verbalizer: &Verbalizer,
    config: &GraphRagConfig,
    cap: usize,
) -> Result<EvidencePack, RetrieveError> {
    let seeds: Vec<Term> = cq.bindings.values().map(|iri| Term::iri(iri.as_str())).collect();
    let reached = expand(graph, &seeds, config)?;
    let mut triples: Vec<Triple> = reached.into_iter().take(cap).map(|(_, t)| t).collect();
    triples.sort();
    let mut pack = EvidencePack::empty(beat_index, cq, Strategy::Graph, graph);
    pack.provenance.push(Provenance::Expansion {
        seeds: cq.bindings.values().cloned().collect(),
        hop_limit: config.hop_limit,
        node_cap: config.node_cap,
        seed: config.seed,
    });
    pack.factlets = triples
        .iter()
        .enumerate()
        .map(|(i, t)| Factlet {
            id: format!("F{}", i + 1),
            text: verbalizer.triple(t, graph),
            supporting_items: vec![ItemRef::Triple(i)],
        })
        .collect();
    pack.triples = triples;
    pack.refresh_entities(graph);
    Ok(pack)
}

/// Dispatches on strategy. An empty Graph-RAG neighbourhood yields an empty,
/// sparse pack rather than an error. `seed` drives Graph-RAG tie-breaking.
pub fn retrieve(
    strategy: Strategy,
    beat_index: usize,
    cq: &BoundCq,
    ctx: &RetrievalContext<'_>,
    seed: u64,
) -> Result<EvidencePack, RetrieveError> {
    match strategy {
        Strategy::Kg => retrieve_kg(beat_index, cq, ctx.graph, ctx.verbalizer, ctx.cap),
        Strategy::Hybrid => retrieve_hybrid(beat_index, cq, ctx.graph, ctx.verbalizer, ctx.snippets, ctx.k, ctx.cap),
        Strategy::Graph => {
            let config = GraphRagConfig { seed, ..ctx.graph_rag.clone() };
            match retrieve_graph(beat_index, cq, ctx.graph, ctx.verbalizer, &config, ctx.cap) {
                Err(RetrieveError::EmptyNeighbourhood) => {
                    log::info!("beat {beat_index} ({}): empty neighbourhood", cq.template_id);
                    Ok(EvidencePack::empty(beat_index, cq, Strategy::Graph, ctx.graph))
                }
                other => other,
            }
        }
    }
}
