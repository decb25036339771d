use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::term::{Term, Triple};
use super::vocab;

/// Interned identifier of a term inside one [`Graph`].
pub type TermId = u32;

type Key = (TermId, TermId, TermId);

/// Immutable, indexed in-memory triple store.
///
/// Every term is interned once; triples are kept in three orderings
/// (SPO, POS, OSP) so any pattern with at least one bound position is a
/// range scan. Build one with [`GraphBuilder`] or [`Graph::from_triples`].
#[derive(Debug, Clone, Default)]
pub struct Graph {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: BTreeSet<Key>,
    pos: BTreeSet<Key>,
    osp: BTreeSet<Key>,
    prefixes: BTreeMap<String, String>,
    labels: HashMap<TermId, TermId>,
}

/// Table-1 style summary of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphProfile {
    pub total_triples: usize,
    pub distinct_classes: usize,
    pub distinct_predicates_excl_type: usize,
    pub typed_subjects: usize,
    pub dual_typed_subjects: usize,
}

#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: Graph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, term: Term) -> TermId {
        if let Some(&id) = self.graph.ids.get(&term) {
            return id;
        }
        let id = TermId::try_from(self.graph.terms.len()).expect("term table exceeds u32");
        self.graph.terms.push(term.clone());
        self.graph.ids.insert(term, id);
        id
    }

    /// Inserts a triple; duplicates are ignored. Returns whether it was new.
    pub fn insert(&mut self, triple: Triple) -> bool {
        let s = self.intern(triple.subject);
        let p = self.intern(triple.predicate);
        let o = self.intern(triple.object);
        if !self.graph.spo.insert((s, p, o)) {
            return false;
        }
        self.graph.pos.insert((p, o, s));
        self.graph.osp.insert((o, s, p));
        true
    }

    pub fn add_prefix(&mut self, prefix: impl Into<String>, iri: impl Into<String>) {
        self.graph.prefixes.insert(prefix.into(), iri.into());
    }

    pub fn len(&self) -> usize {
        self.graph.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.spo.is_empty()
    }

    pub fn build(mut self) -> Graph {
        let mut labels: HashMap<TermId, TermId> = HashMap::new();
        if let Some(&name) = self.graph.ids.get(&Term::iri(vocab::SCHEMA_NAME)) {
            let graph = &self.graph;
            for &(p, o, s) in graph.pos.range((name, 0, 0)..=(name, TermId::MAX, TermId::MAX)) {
                debug_assert_eq!(p, name);
                if !graph.terms[o as usize].is_literal() {
                    continue;
                }
                // smallest label wins so dual-labelled entities stay deterministic
                labels
                    .entry(s)
                    .and_modify(|cur| {
                        if graph.terms[o as usize].value() < graph.terms[*cur as usize].value() {
                            *cur = o;
                        }
                    })
                    .or_insert(o);
            }
        }
        self.graph.labels = labels;
        self.graph
    }
}

impl Graph {
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        let mut builder = GraphBuilder::new();
        for t in triples {
            builder.insert(t);
        }
        builder.build()
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    pub fn term_id(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id as usize]
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// All interned terms in interning order.
    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        match (self.term_id(&triple.subject), self.term_id(&triple.predicate), self.term_id(&triple.object)) {
            (Some(s), Some(p), Some(o)) => self.spo.contains(&(s, p, o)),
            _ => false,
        }
    }

    pub fn decode(&self, [s, p, o]: [TermId; 3]) -> Triple {
        Triple { subject: self.term(s).clone(), predicate: self.term(p).clone(), object: self.term(o).clone() }
    }

    /// Triples in SPO index order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().map(|&(s, p, o)| self.decode([s, p, o]))
    }

    /// Id-level pattern match. Results come back in the order of the index
    /// chosen for the bound positions, as `[s, p, o]`.
    pub fn match_ids(
        &self,
        s: Option<TermId>,
        p: Option<TermId>,
        o: Option<TermId>,
    ) -> Box<dyn Iterator<Item = [TermId; 3]> + '_> {
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => Box::new(self.spo.contains(&(s, p, o)).then_some([s, p, o]).into_iter()),
            (Some(s), Some(p), None) => Box::new(prefix2(&self.spo, s, p).map(|&(s, p, o)| [s, p, o])),
            (Some(s), None, Some(o)) => Box::new(prefix2(&self.osp, o, s).map(|&(o, s, p)| [s, p, o])),
            (None, Some(p), Some(o)) => Box::new(prefix2(&self.pos, p, o).map(|&(p, o, s)| [s, p, o])),
            (Some(s), None, None) => Box::new(prefix1(&self.spo, s).map(|&(s, p, o)| [s, p, o])),
            (None, Some(p), None) => Box::new(prefix1(&self.pos, p).map(|&(p, o, s)| [s, p, o])),
            (None, None, Some(o)) => Box::new(prefix1(&self.osp, o).map(|&(o, s, p)| [s, p, o])),
            (None, None, None) => Box::new(self.spo.iter().map(|&(s, p, o)| [s, p, o])),
        }
    }

    /// Triples matching every concrete position of the pattern.
    pub fn match_pattern(&self, s: Option<&Term>, p: Option<&Term>, o: Option<&Term>) -> Vec<Triple> {
        let lookup = |t: Option<&Term>| match t {
            None => Some(None),
            Some(term) => self.term_id(term).map(Some),
        };
        match (lookup(s), lookup(p), lookup(o)) {
            (Some(s), Some(p), Some(o)) => self.match_ids(s, p, o).map(|ids| self.decode(ids)).collect(),
            _ => Vec::new(),
        }
    }

    /// Lexicographically smallest `schema:name` of a term, if any.
    pub fn label(&self, term: &Term) -> Option<&str> {
        let id = self.term_id(term)?;
        self.label_of_id(id)
    }

    pub fn label_of_id(&self, id: TermId) -> Option<&str> {
        self.labels.get(&id).map(|&l| self.term(l).value())
    }

    /// Human-facing rendering: schema:name, else IRI local name, else the
    /// literal's lexical form.
    pub fn display_label(&self, term: &Term) -> String {
        match term {
            Term::Literal(lit) => lit.value.clone(),
            other => self.label(other).map(str::to_string).unwrap_or_else(|| other.local_name().to_string()),
        }
    }

    /// Whether the term occurs as subject or object of some triple.
    pub fn mentions(&self, term: &Term) -> bool {
        match self.term_id(term) {
            Some(id) => prefix1(&self.spo, id).next().is_some() || prefix1(&self.osp, id).next().is_some(),
            None => false,
        }
    }

    /// Subjects typed with any of the given classes, sorted and deduplicated.
    pub fn instances_of<'a>(&self, classes: impl IntoIterator<Item = &'a str>) -> Vec<Term> {
        let Some(rdf_type) = self.term_id(&Term::iri(vocab::RDF_TYPE)) else {
            return Vec::new();
        };
        let mut out = BTreeSet::new();
        for class in classes {
            if let Some(c) = self.term_id(&Term::iri(class)) {
                for [s, _, _] in self.match_ids(None, Some(rdf_type), Some(c)) {
                    out.insert(self.term(s).clone());
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn profile(&self) -> GraphProfile {
        let rdf_type = self.term_id(&Term::iri(vocab::RDF_TYPE));
        let mut predicates: BTreeSet<TermId> = BTreeSet::new();
        for &(p, _, _) in &self.pos {
            predicates.insert(p);
        }
        let mut classes = BTreeSet::new();
        let mut types_per_subject: BTreeMap<TermId, usize> = BTreeMap::new();
        if let Some(t) = rdf_type {
            predicates.remove(&t);
            for &(_, o, s) in prefix1(&self.pos, t) {
                classes.insert(o);
                *types_per_subject.entry(s).or_default() += 1;
            }
        }
        GraphProfile {
            total_triples: self.len(),
            distinct_classes: classes.len(),
            distinct_predicates_excl_type: predicates.len(),
            typed_subjects: types_per_subject.len(),
            dual_typed_subjects: types_per_subject.values().filter(|&&n| n >= 2).count(),
        }
    }
}

fn prefix1(index: &BTreeSet<Key>, a: TermId) -> impl Iterator<Item = &Key> {
    index.range((Bound::Included((a, 0, 0)), Bound::Included((a, TermId::MAX, TermId::MAX))))
}

fn prefix2(index: &BTreeSet<Key>, a: TermId, b: TermId) -> impl Iterator<Item = &Key> {
    index.range((Bound::Included((a, b, 0)), Bound::Included((a, b, TermId::MAX))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(local: &str) -> Term {
        Term::iri(format!("{}{local}", vocab::EX))
    }

    fn rdf_type() -> Term {
        Term::iri(vocab::RDF_TYPE)
    }

    #[test]
    fn empty_profile_is_zero() {
        assert_eq!(Graph::default().profile(), GraphProfile::default());
    }

    #[test]
    fn dual_typing_counts_once() {
        let g = Graph::from_triples([
            Triple::new(ex("a"), rdf_type(), ex("C1")),
            Triple::new(ex("a"), rdf_type(), ex("C2")),
        ]);
        let p = g.profile();
        assert_eq!(p.dual_typed_subjects, 1);
        assert_eq!(p.typed_subjects, 1);
        assert_eq!(p.distinct_classes, 2);
        assert_eq!(p.distinct_predicates_excl_type, 0);
    }

    #[test]
    fn duplicates_stored_once() {
        let t = Triple::new(ex("a"), ex("p"), ex("b"));
        let g = Graph::from_triples([t.clone(), t.clone()]);
        assert_eq!(g.len(), 1);
        assert_eq!(g.spo.len(), g.pos.len());
        assert_eq!(g.spo.len(), g.osp.len());
    }

    #[test]
    fn queen_is_dual_typed() {
        let queen = ex("Queen");
        let g = Graph::from_triples([
            Triple::new(queen.clone(), rdf_type(), Term::iri(format!("{}MusicGroup", vocab::SCHEMA))),
            Triple::new(queen.clone(), rdf_type(), Term::iri(format!("{}MusicEnsemble", vocab::MM))),
            Triple::new(queen.clone(), Term::iri(vocab::SCHEMA_NAME), Term::literal("Queen")),
        ]);
        assert_eq!(g.match_pattern(Some(&queen), Some(&rdf_type()), None).len(), 2);
        assert!(g.match_pattern(None, Some(&ex("p")), Some(&ex("missing"))).is_empty());
        assert_eq!(g.match_pattern(None, None, None).len(), 3);
    }

    #[test]
    fn smallest_label_wins() {
        let g = Graph::from_triples([
            Triple::new(ex("a"), Term::iri(vocab::SCHEMA_NAME), Term::literal("Zed")),
            Triple::new(ex("a"), Term::iri(vocab::SCHEMA_NAME), Term::literal("Alpha")),
        ]);
        assert_eq!(g.label(&ex("a")), Some("Alpha"));
        assert_eq!(g.display_label(&ex("b")), "b");
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![(0u8..6).prop_map(|i| ex(&format!("n{i}"))), (0u8..3).prop_map(|i| Term::literal(format!("l{i}"))),]
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        ((0u8..6), (0u8..3), arb_term())
            .prop_map(|(s, p, o)| Triple::new(ex(&format!("n{s}")), ex(&format!("p{p}")), o))
    }

    proptest! {
        #[test]
        fn match_equals_linear_scan(
            triples in prop::collection::vec(arb_triple(), 0..40),
            s in prop::option::of(0u8..6),
            p in prop::option::of(0u8..3),
            o in prop::option::of(arb_term()),
        ) {
            let g = Graph::from_triples(triples.clone());
            let s = s.map(|i| ex(&format!("n{i}")));
            let p = p.map(|i| ex(&format!("p{i}")));
            let got: BTreeSet<Triple> = g.match_pattern(s.as_ref(), p.as_ref(), o.as_ref()).into_iter().collect();
            let expected: BTreeSet<Triple> = triples
                .iter()
                .filter(|t| s.as_ref().is_none_or(|x| *x == t.subject))
                .filter(|t| p.as_ref().is_none_or(|x| *x == t.predicate))
                .filter(|t| o.as_ref().is_none_or(|x| *x == t.object))
                .cloned()
                .collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn indexes_agree(triples in prop::collection::vec(arb_triple(), 0..40)) {
            let g = Graph::from_triples(triples);
            let spo: BTreeSet<Key> = g.spo.iter().copied().collect();
            let pos: BTreeSet<Key> = g.pos.iter().map(|&(p, o, s)| (s, p, o)).collect();
            let osp: BTreeSet<Key> = g.osp.iter().map(|&(o, s, p)| (s, p, o)).collect();
            prop_assert_eq!(&spo, &pos);
            prop_assert_eq!(&spo, &osp);
        }

        #[test]
        fn profile_ignores_order(mut triples in prop::collection::vec(arb_triple(), 0..40)) {
            let a = Graph::from_triples(triples.clone()).profile();
            triples.reverse();
            let b = Graph::from_triples(triples).profile();
            prop_assert_eq!(a, b);
        }
    }
}
