//! One status line per acceptance criterion, written straight to stdout so it
//! shows up in `cargo test` output without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::metric_oracle::{run_cases, FRE_CASES, FRE_TOLERANCE};
use common::query_cases::{check_plan, random_graph, ORACLE_QUERIES};
use common::{bound, data_dir, deterministic_outputs, fixture_bindings, fixture_graph, library, mock_config};
use storyrag::cq::instantiate;
use storyrag::eval::{fre, global_cohesion, sub_signals, EntityMatcher, MetricConfig, SubSignals};
use storyrag::generate::{
    generate_beat, lint_story, BeatText, GenerateError, GeneratorConfig, LintConfig, LintKind, PromptTemplate,
    StoryOutput, TextBackend,
};
use storyrag::harness::{run_experiment, AGGREGATE_CSV, REPORT_MD};
use storyrag::kg::{load_turtle, Graph, GraphProfile};
use storyrag::planner::{load_persona, LengthTier};
use storyrag::query::{execute, parse_query};
use storyrag::retrieve::{retrieve, GraphRagConfig, RetrievalContext, Strategy};

/// Environment variable naming a local copy of the full published Turtle dump.
const PUBLISHED_KG_ENV: &str = "STORYRAG_LIVEAID_KG";

const PUBLISHED_PROFILE: GraphProfile = GraphProfile {
    total_triples: 20_343,
    distinct_classes: 40,
    distinct_predicates_excl_type: 109,
    typed_subjects: 3_547,
    dual_typed_subjects: 398,
};

// counted independently over the bundled fixture
const FIXTURE_PROFILE: GraphProfile = GraphProfile {
    total_triples: 387,
    distinct_classes: 20,
    distinct_predicates_excl_type: 34,
    typed_subjects: 112,
    dual_typed_subjects: 10,
};

const INGEST_BUDGET: Duration = Duration::from_secs(10);
const QUERY_ORACLE_GRAPHS: u64 = 24;
const QUERY_ORACLE_BUDGET: Duration = Duration::from_secs(5);
const METRIC_CASES: usize = 60;
const MOCK_MATRIX_BUDGET: Duration = Duration::from_secs(30);
const MATRIX_CELLS: usize = 18;

enum Status {
    Pass,
    Fail,
    Skip,
}

fn report(n: u8, title: &str, status: Status, detail: &str) {
    let tag = match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    let line = format!("acceptance criterion {n} [{tag}] {title}: {detail}\n");
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    if matches!(status, Status::Fail) {
        panic!("criterion {n} failed: {detail}");
    }
}

fn published_kg() -> Option<PathBuf> {
    std::env::var_os(PUBLISHED_KG_ENV).map(PathBuf::from).filter(|p| p.exists())
}

#[test]
fn criterion_1_kg_profile() {
    let fixture = fixture_graph().profile();
    if fixture != FIXTURE_PROFILE {
        return report(1, "KG profile", Status::Fail, &format!("fixture profile {fixture:?}"));
    }
    let Some(path) = published_kg() else {
        return report(
            1,
            "KG profile",
            Status::Skip,
            &format!(
                "published dump not available (set {PUBLISHED_KG_ENV}); bundled fixture profile matches its hand count"
            ),
        );
    };
    let start = Instant::now();
    let profile = match load_turtle(&path) {
        Ok(g) => g.profile(),
        Err(e) => return report(1, "KG profile", Status::Fail, &e.to_string()),
    };
    let elapsed = start.elapsed();
    if profile == PUBLISHED_PROFILE && elapsed < INGEST_BUDGET {
        report(1, "KG profile", Status::Pass, &format!("{profile:?} in {elapsed:.2?}"));
    } else {
        report(1, "KG profile", Status::Fail, &format!("{profile:?} in {elapsed:.2?}"));
    }
}

#[test]
fn criterion_2_cq_coverage() {
    let lib = library();
    let (graph, which): (Graph, &str) = match published_kg() {
        Some(p) => (load_turtle(&p).unwrap(), "published dump"),
        None => (fixture_graph(), "bundled fixture; published dump not available"),
    };
    let bindings = [
        ("CQ-L14", vec![("musicgroup", "Queen")]),
        ("CQ-E3", vec![("event", "LiveAid1985"), ("venue", "WembleyStadium")]),
        ("CQ-L10", vec![("event", "LiveAid1985"), ("musicgroup", "Queen")]),
    ];
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (id, pairs) in &bindings {
        let b: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), common::ex(v))).collect();
        match instantiate(&lib, id, &b, &graph).map(|cq| execute(&cq.bound_plan, &graph)) {
            Ok(Ok(t)) if !t.is_empty() => rows.push(format!("{id}={}", t.len())),
            Ok(Ok(_)) => failures.push(format!("{id}: no rows")),
            Ok(Err(e)) => failures.push(format!("{id}: {e}")),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    if failures.is_empty() {
        report(2, "CQ coverage gate", Status::Pass, &format!("rows {} ({which})", rows.join(", ")));
    } else {
        report(2, "CQ coverage gate", Status::Fail, &failures.join("; "));
    }
}

#[test]
fn criterion_3_query_oracle() {
    let start = Instant::now();
    let plans: Vec<_> = ORACLE_QUERIES.iter().map(|q| parse_query(q).unwrap()).collect();
    let mut failures = Vec::new();
    for seed in 0..QUERY_ORACLE_GRAPHS {
        let g = random_graph(seed);
        assert!(g.len() <= 50);
        for (q, plan) in ORACLE_QUERIES.iter().zip(&plans) {
            if let Err(e) = check_plan(plan, &g) {
                failures.push(format!("graph {seed}, {q}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{QUERY_ORACLE_GRAPHS} graphs x {} queries in {elapsed:.2?}", plans.len());
    if failures.is_empty() && elapsed < QUERY_ORACLE_BUDGET {
        report(3, "query engine vs brute force", Status::Pass, &detail);
    } else {
        report(3, "query engine vs brute force", Status::Fail, &format!("{detail}; {}", failures.join("; ")));
    }
}

#[test]
fn criterion_4_metric_oracle() {
    let cases = run_cases(4, METRIC_CASES);
    let cfg = MetricConfig::default();
    let fre_bad: Vec<String> = FRE_CASES
        .iter()
        .filter_map(|(t, want)| {
            let got = fre(t, &cfg).ok()?;
            ((got - want).abs() > FRE_TOLERANCE).then(|| format!("{t:?}: {got:.4} vs {want}"))
        })
        .collect();
    match (cases, fre_bad.is_empty()) {
        (Ok(n), true) => report(
            4,
            "metric oracles",
            Status::Pass,
            &format!("{n} random cases within 1e-9; {} FRE texts within {FRE_TOLERANCE}", FRE_CASES.len()),
        ),
        (Err(e), _) => report(4, "metric oracles", Status::Fail, &e),
        (Ok(_), false) => report(4, "metric oracles", Status::Fail, &fre_bad.join("; ")),
    }
}

fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.into(), v.into())).collect())
        .collect()
}

#[test]
fn criterion_5_mock_fixpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_config(dir.path());
    let start = Instant::now();
    let outcomes = run_experiment(&cfg, false).unwrap();
    let elapsed = start.elapsed();
    let csv = std::fs::read_to_string(dir.path().join(AGGREGATE_CSV)).unwrap();
    let rows = csv_rows(&csv);
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r["support_pct"] != "100.00" || r["coverage_pct"] != "100.00")
        .map(|r| {
            format!("{} {} {}: {}/{}", r["persona"], r["length"], r["strategy"], r["support_pct"], r["coverage_pct"])
        })
        .collect();
    let detail = format!("{} runs, {} cells in {elapsed:.2?}", outcomes.len(), rows.len());
    if rows.len() == MATRIX_CELLS && bad.is_empty() && elapsed < MOCK_MATRIX_BUDGET {
        report(5, "mock pipeline fixpoint", Status::Pass, &format!("{detail}; support and coverage 100.00 everywhere"));
    } else {
        report(5, "mock pipeline fixpoint", Status::Fail, &format!("{detail}; {}", bad.join("; ")));
    }
}

#[test]
fn criterion_6_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_a = mock_config(a.path());
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = b.path().to_path_buf();
    cfg_b.workers = 1;
    run_experiment(&cfg_a, false).unwrap();
    run_experiment(&cfg_b, false).unwrap();
    let (x, y) = (deterministic_outputs(a.path()), deterministic_outputs(b.path()));
    let differing: Vec<&String> = x.keys().filter(|k| y.get(*k) != x.get(*k)).collect();
    let plans = x.keys().filter(|k| k.ends_with("plan.json")).count();
    let packs = x.keys().filter(|k| k.ends_with("packs.jsonl")).count();
    let detail = format!("{} files compared ({plans} plans, {packs} pack files, {AGGREGATE_CSV})", x.len());
    if differing.is_empty() && x.len() == y.len() && x.contains_key(AGGREGATE_CSV) {
        report(6, "determinism", Status::Pass, &format!("{detail}, all byte-identical"));
    } else {
        report(6, "determinism", Status::Fail, &format!("{detail}; differing: {differing:?}"));
    }
}

/// Answers with the prompt's facts interleaved with unrelated sentences.
struct Noisy;

impl TextBackend for Noisy {
    fn id(&self) -> String {
        "noisy".into()
    }
    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }
    fn complete(&self, prompt: &str) -> Result<String, GenerateError> {
        let mut out = vec!["Penguins enjoy cold weather.".to_string()];
        for line in prompt.lines() {
            if let Some((_, text)) = line.trim_start().strip_prefix("[F").and_then(|r| r.split_once("] ")) {
                out.push(format!("{text}."));
                out.push("Nobody remembers the weather that day.".into());
            }
        }
        Ok(out.join(" "))
    }
}

#[test]
fn criterion_7_evidence_closure() {
    let g = fixture_graph();
    let lib = library();
    let persona = load_persona(&data_dir().join("personas/luca.json")).unwrap();
    let v = common::verbalizer();
    let index = common::snippet_index();
    let rag = GraphRagConfig::default();
    let ctx = RetrievalContext { graph: &g, verbalizer: &v, snippets: &index, cap: 25, k: 3, graph_rag: &rag };
    let metric = MetricConfig::default();
    let prompt = PromptTemplate::default();
    let mut problems = Vec::new();
    let (mut sentences, mut suppressed) = (0, 0);
    for (id, sets) in fixture_bindings() {
        for b in sets {
            let cq = instantiate(&lib, &id, &b, &g).unwrap();
            for s in Strategy::ALL {
                let pack = retrieve(s, 0, &cq, &ctx, 1985).unwrap();
                let beat =
                    generate_beat(&pack, &persona, &Noisy, &prompt, &GeneratorConfig::default(), &metric).unwrap();
                for (text, ids) in beat.sentences.iter().zip(&beat.evidence_map) {
                    sentences += 1;
                    if ids.is_empty() || ids.iter().any(|i| !pack.factlets.iter().any(|f| &f.id == i)) {
                        problems.push(format!("{id}/{s}: {text:?} cites {ids:?}"));
                    }
                }
                if beat.sentences.len() != beat.evidence_map.len() {
                    problems.push(format!("{id}/{s}: evidence map length"));
                }
                let thin = GeneratorConfig { min_facts: pack.factlets.len() + 1, budget: 6 };
                let beat = generate_beat(&pack, &persona, &Noisy, &prompt, &thin, &metric).unwrap();
                let want = format!("sparse evidence ({} factlets)", pack.factlets.len());
                suppressed += 1;
                if !beat.suppressed || !beat.sentences.is_empty() || beat.suppression_reason.as_deref() != Some(&want) {
                    problems.push(format!("{id}/{s}: thin pack not suppressed"));
                }
            }
        }
    }
    let alias = "KG's eventName was Live Aid 1985";
    let story = StoryOutput {
        plan_ref: "luca_Small_0.json".into(),
        persona_id: "luca".into(),
        length: LengthTier::Small,
        seed: 0,
        strategy: Strategy::Kg,
        backend_id: "noisy".into(),
        backend_params: BTreeMap::new(),
        beats: vec![BeatText {
            sentences: vec![alias.into()],
            evidence_map: vec![vec!["F1".into()]],
            suppressed: false,
            suppression_reason: None,
            ..BeatText::suppressed(0, String::new())
        }],
        complete: true,
    };
    let lint = lint_story(&story, &[], &LintConfig::with_variables(&lib.variable_names()));
    if !lint.iter().any(|f| f.kind == LintKind::AliasLeakage) {
        problems.push(format!("alias leakage not flagged in {alias:?}"));
    }
    let detail = format!(
        "{sentences} kept sentences all cite their pack; {suppressed} thin packs suppressed; alias leakage flagged"
    );
    if problems.is_empty() && sentences > 0 {
        report(7, "evidence closure and suppression", Status::Pass, &detail);
    } else {
        report(7, "evidence closure and suppression", Status::Fail, &problems.join("; "));
    }
}

#[test]
fn criterion_8_declared_shape() {
    // two beats whose sub-signals are all 1
    let g = fixture_graph();
    let cq = bound(&g, "CQ-E3", &[("event", "LiveAid1985"), ("venue", "WembleyStadium")]);
    let pack = storyrag::retrieve::EvidencePack::empty(0, &cq, Strategy::Graph, &g);
    let mut entities = pack.entities.clone();
    entities.insert(common::ex("Queen"), "Queen".into());
    let sections = vec![
        vec!["Queen played Wembley Stadium.".to_string(), "Queen played a famous set.".to_string()],
        vec!["Queen returned to the stage.".to_string(), "Queen returned with an encore.".to_string()],
    ];
    let cfg = MetricConfig::default();
    let matcher = EntityMatcher::new(&entities);
    let signals = sub_signals(&sections, &matcher, &cfg);
    let ones = SubSignals {
        local_cohesion: 1.0,
        entity_flow: 1.0,
        bridge_rate: 1.0,
        temporal_consistency: 1.0,
        reference_stability: 1.0,
    };
    let glob = format!("{:.3}", global_cohesion(&sections, &matcher, &cfg));

    let dir = tempfile::tempdir().unwrap();
    let mut mcfg = mock_config(dir.path());
    mcfg.runs_per_cell = [("emma".to_string(), 1), ("luca".to_string(), 1)].into();
    run_experiment(&mcfg, false).unwrap();
    let md = std::fs::read_to_string(dir.path().join(REPORT_MD)).unwrap();
    let tables: Vec<usize> = md
        .split("\n## ")
        .skip(1)
        .map(|t| t.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Persona")).count())
        .collect();
    let csv_rows = std::fs::read_to_string(dir.path().join(AGGREGATE_CSV)).unwrap().lines().count() - 1;

    let detail = format!(
        "absolute table values depend on a hosted model and are not reproduced; all-ones sub-signals give Glob {glob}; \
         report has {} tables with {tables:?} rows, CSV has {csv_rows} cells",
        tables.len()
    );
    if signals == ones && glob == "1.000" && tables == [MATRIX_CELLS, MATRIX_CELLS] && csv_rows == MATRIX_CELLS {
        report(8, "declared non-reproducible values, reproduced shape", Status::Pass, &detail);
    } else {
        report(
            8,
            "declared non-reproducible values, reproduced shape",
            Status::Fail,
            &format!("{detail}; {signals:?}"),
        );
    }
}
