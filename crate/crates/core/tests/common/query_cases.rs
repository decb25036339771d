//! Seeded small graphs and the query set used for oracle comparison.

use storyrag::kg::{Graph, GraphBuilder, Term, Triple};
use storyrag::query::{execute, QueryPlan};
use storyrag::rng::SplitMix64;

use super::oracle::{multiset, Oracle};

const E: &str = "http://e/";

pub const ORACLE_QUERIES: &[&str] = &[
    "PREFIX e: <http://e/> SELECT ?a ?b ?c WHERE { ?a e:p0 ?b . ?b e:p1 ?c }",
    "PREFIX e: <http://e/> SELECT DISTINCT ?a WHERE { ?a e:p0 ?b }",
    "PREFIX e: <http://e/> SELECT DISTINCT ?a ?c WHERE { ?a e:p0 ?b ; a ?c }",
    "PREFIX e: <http://e/> SELECT ?a ?n WHERE { ?a a e:C0 OPTIONAL { ?a e:name ?n } }",
    "PREFIX e: <http://e/> SELECT ?a ?b ?c ?n WHERE { ?a e:p0 ?b OPTIONAL { ?b e:p1 ?c OPTIONAL { ?c e:name ?n } } }",
    "PREFIX e: <http://e/> SELECT ?a ?b WHERE { ?a e:p0 ?b . ?a e:flag ?f FILTER(?f = true && ?a != ?b) }",
    "PREFIX e: <http://e/> SELECT ?a ?b ?c WHERE { ?a e:p0 ?b . ?b e:p1 ?c FILTER((?b = e:e1) && (?c != e:e2)) }",
    "PREFIX e: <http://e/> SELECT ?a (GROUP_CONCAT(DISTINCT ?n; separator=\", \") AS ?names) WHERE { ?a e:p0 ?b . ?b e:name ?n } GROUP BY ?a",
    "PREFIX e: <http://e/> SELECT ?c (GROUP_CONCAT(DISTINCT ?a; separator=\"|\") AS ?members) WHERE { ?a a ?c } GROUP BY ?c ORDER BY ?c",
    "PREFIX e: <http://e/> SELECT ?a ?v WHERE { ?a e:rank ?v } ORDER BY DESC(?v) ?a",
    "PREFIX e: <http://e/> SELECT ?a ?n WHERE { ?a a e:C0 OPTIONAL { ?a e:name ?n } } ORDER BY ?n",
    "PREFIX e: <http://e/> SELECT ?b ?v WHERE { BIND(e:e0 AS ?a) ?a e:p0 ?b OPTIONAL { ?b e:rank ?v } } ORDER BY ?v",
    "PREFIX e: <http://e/> SELECT DISTINCT ?n WHERE { ?a e:name ?n . ?a e:p0 ?b . ?b a e:C1 }",
    "PREFIX e: <http://e/> SELECT ?a ?b WHERE { ?a e:p0 ?b , ?b2 . ?b e:p1 ?b2 }",
];

/// Seeded random graph over a small vocabulary, at most 50 triples.
pub fn random_graph(seed: u64) -> Graph {
    let mut rng = SplitMix64::new(seed);
    let entity = |i: usize| Term::iri(format!("{E}e{i}"));
    let pred = |p: &str| Term::iri(format!("{E}{p}"));
    let mut b = GraphBuilder::new();
    let n = 20 + rng.below(31);
    while b.len() < n {
        let s = entity(rng.below(7));
        let triple = match rng.below(7) {
            0 => Triple::new(s, Term::iri(storyrag::kg::vocab::RDF_TYPE), pred(["C0", "C1"][rng.below(2)])),
            1 | 2 => Triple::new(s, pred("p0"), entity(rng.below(7))),
            3 => Triple::new(s, pred("p1"), entity(rng.below(7))),
            4 => Triple::new(s, pred("name"), Term::literal(format!("n{}", rng.below(5)))),
            5 => Triple::new(s, pred("flag"), Term::boolean(rng.below(2) == 0)),
            _ => Triple::new(s, pred("rank"), Term::integer([1, 2, 3, 10, 25][rng.below(5)])),
        };
        b.insert(triple);
    }
    b.build()
}

/// Row multiset equality with the oracle, plus order-key equality under ORDER BY.
pub fn check_plan(plan: &QueryPlan, graph: &Graph) -> Result<(), String> {
    let got = execute(plan, graph).map_err(|e| e.to_string())?;
    let want = Oracle::run(graph, plan);
    if multiset(&got.rows) != multiset(&want) {
        return Err("rows differ".into());
    }
    if !plan.order_by.is_empty() {
        let key_cols: Vec<usize> = plan
            .order_by
            .iter()
            .map(|k| plan.select_vars().iter().position(|c| *c == k.var).expect("order key is projected"))
            .collect();
        let keys = |rows: &[Vec<Option<Term>>]| -> Vec<Vec<Option<Term>>> {
            rows.iter().map(|r| key_cols.iter().map(|&i| r[i].clone()).collect()).collect()
        };
        if keys(&got.rows) != keys(&want) {
            return Err("order differs".into());
        }
    }
    Ok(())
}
