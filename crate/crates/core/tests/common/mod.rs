#![allow(dead_code)]

pub mod metric_oracle;
pub mod oracle;
pub mod query_cases;

use std::path::PathBuf;

use storyrag::cq::{load_library, CqLibrary};
use storyrag::kg::{load_turtle, Graph};
use storyrag::planner::{BeatTemplates, SlotTypes};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture_graph() -> Graph {
    load_turtle(&data_dir().join("kg/liveaid_fixture.ttl")).expect("fixture parses")
}

pub fn library() -> CqLibrary {
    load_library(&data_dir().join("cq")).expect("shipped library loads")
}

pub fn beat_templates() -> BeatTemplates {
    BeatTemplates::load(&data_dir().join("beats.json")).unwrap()
}

pub fn slot_types() -> SlotTypes {
    SlotTypes::load(&data_dir().join("slot_types.json")).unwrap()
}

pub const EX: &str = "http://wembrewind.live/ex#";

pub fn ex(local: &str) -> String {
    format!("{EX}{local}")
}

pub fn verbalizer() -> storyrag::retrieve::Verbalizer {
    storyrag::retrieve::Verbalizer::load(&data_dir().join("verbalize.json")).unwrap()
}

pub fn snippet_index() -> storyrag::retrieve::SnippetIndex {
    storyrag::retrieve::build_snippet_index(&data_dir().join("snippets")).unwrap()
}

pub fn fixture_bindings() -> storyrag::validate::FixtureBindings {
    storyrag::validate::load_fixture(&data_dir().join("cq_fixture_bindings.json")).unwrap()
}

/// Binds a shipped CQ with `ex:` local names.
pub fn bound(graph: &Graph, cq_id: &str, pairs: &[(&str, &str)]) -> storyrag::cq::BoundCq {
    let bindings = pairs.iter().map(|(k, v)| (k.to_string(), ex(v))).collect();
    storyrag::cq::instantiate(&library(), cq_id, &bindings, graph).unwrap()
}

/// The shipped mock matrix, writing under `out`.
pub fn mock_config(out: &std::path::Path) -> storyrag::harness::ExperimentConfig {
    let mut cfg = storyrag::harness::ExperimentConfig::load(&data_dir().join("configs/mock_matrix.json")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Every output file except run manifests (which carry timestamps), keyed by
/// path relative to `out`.
pub fn deterministic_outputs(out: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, acc: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else if path.file_name().unwrap() != storyrag::harness::MANIFEST_FILE {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                acc.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = std::collections::BTreeMap::new();
    walk(out, out, &mut acc);
    acc
}
