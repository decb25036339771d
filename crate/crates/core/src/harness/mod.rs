//! Experiment harness: loads the shared inputs once, then runs
//! plan → retrieve → generate → evaluate for every (persona, length,
//! strategy, run) and writes per-run artifacts plus aggregates.
//!
//! Run seeds are the first eight bytes (big-endian) of
//! `sha256("{base_seed}|{persona}|{length}|{strategy}|{run_index}")`.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cq::{load_library, CqError, CqLibrary};
use crate::eval::{evaluate_run, EvalError, MetricReport};
use crate::generate::{
    generate_story, lint_story, GenerateError, HttpBackend, LintConfig, MockBackend, PromptTemplate, StoryOutput,
    StoryRequest, TextBackend,
};
use crate::kg::{load_turtle, Graph};
use crate::planner::{
    build_beat_plan, serialize_plan, BeatPlan, BeatTemplates, LengthTier, Persona, PlanError, PlannerInputs, SlotTypes,
};
use crate::retrieve::{
    build_snippet_index, retrieve, EvidencePack, RetrievalContext, RetrieveError, SnippetIndex, Strategy, Verbalizer,
};

pub use config::{AssetPaths, BackendConfig, BackendKind, ExperimentConfig, RetrievalSettings};
pub use report::{
    aggregate, aggregate_records, cells_of, collect_runs, render_csv, render_markdown, CellSummary, RunRecord,
    CSV_COLUMNS,
};

pub const RUNS_DIR: &str = "runs";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const REPORT_MD: &str = "report.md";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLAN_FILE: &str = "plan.json";
pub const PACKS_FILE: &str = "packs.jsonl";
pub const STORY_FILE: &str = "story.json";
pub const METRICS_FILE: &str = "report.json";
pub const LINT_FILE: &str = "lint.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] crate::Error),
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown persona {0}")]
    UnknownPersona(String),
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn derive_seed(base_seed: u64, persona: &str, length: LengthTier, strategy: Strategy, run_index: usize) -> u64 {
    let digest = Sha256::digest(format!("{base_seed}|{persona}|{length}|{strategy}|{run_index}").as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Graph-RAG seed for one beat of a run.
pub fn beat_seed(run_seed: u64, beat_index: usize) -> u64 {
    run_seed.wrapping_add(beat_index as u64)
}

pub fn run_id(persona: &str, length: LengthTier, strategy: Strategy, run_index: usize) -> String {
    format!("{persona}_{length}_{strategy}_r{run_index:02}")
}

/// Shared read-only inputs, loaded once per experiment.
pub struct Assets {
    pub graph: Graph,
    pub library: CqLibrary,
    pub personas: BTreeMap<String, Persona>,
    pub beats: BeatTemplates,
    pub slot_types: SlotTypes,
    pub verbalizer: Verbalizer,
    pub snippets: SnippetIndex,
    pub prompt: PromptTemplate,
    /// Input file → sha256, for manifests.
    pub input_hashes: BTreeMap<String, String>,
}

fn hash_tree(path: &Path, out: &mut BTreeMap<String, String>) -> Result<(), HarnessError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| HarnessError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            hash_tree(&e, out)?;
        }
    } else if path.is_file() {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        out.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    Ok(())
}

impl Assets {
    pub fn load(paths: &AssetPaths) -> Result<Self, HarnessError> {
        let graph = load_turtle(&paths.kg)?;
        let library = load_library(&paths.cq_dir)?;
        let personas = crate::planner::load_personas(&paths.personas)?;
        let mut input_hashes = BTreeMap::new();
        for p in [
            &paths.kg,
            &paths.cq_dir,
            &paths.personas,
            &paths.snippets,
            &paths.beats,
            &paths.slot_types,
            &paths.verbalize,
            &paths.prompt,
        ] {
            hash_tree(p, &mut input_hashes)?;
        }
        Ok(Assets {
            graph,
            library,
            personas,
            beats: BeatTemplates::load(&paths.beats)?,
            slot_types: SlotTypes::load(&paths.slot_types)?,
            verbalizer: Verbalizer::load(&paths.verbalize)?,
            snippets: build_snippet_index(&paths.snippets)?,
            prompt: PromptTemplate::load(&paths.prompt)?,
            input_hashes,
        })
    }

    pub fn persona(&self, id: &str) -> Result<&Persona, HarnessError> {
        self.personas.get(id).ok_or_else(|| HarnessError::UnknownPersona(id.to_string()))
    }

    pub fn planner_inputs(&self) -> PlannerInputs<'_> {
        PlannerInputs { library: &self.library, graph: &self.graph, beats: &self.beats, slot_types: &self.slot_types }
    }

    pub fn retrieval_context<'a>(&'a self, settings: &'a RetrievalSettings) -> RetrievalContext<'a> {
        RetrievalContext {
            graph: &self.graph,
            verbalizer: &self.verbalizer,
            snippets: &self.snippets,
            cap: settings.cap,
            k: settings.k,
            graph_rag: &settings.graph_rag,
        }
    }
}

/// Builds the configured backend. The mock never touches the network.
pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn TextBackend>, HarnessError> {
    match config.id {
        BackendKind::Mock => Ok(Arc::new(MockBackend::new())),
        BackendKind::Http => {
            let endpoint =
                config.endpoint.as_deref().ok_or_else(|| HarnessError::Config("backend.endpoint missing".into()))?;
            let model = config.model.as_deref().ok_or_else(|| HarnessError::Config("backend.model missing".into()))?;
            let timeout = Duration::from_secs(config.timeout_secs);
            let backend = match config.resolved_api_key()? {
                Some(key) => HttpBackend::new(endpoint, model, key, timeout, config.max_concurrent),
                None => HttpBackend::from_env(endpoint, model, timeout, config.max_concurrent)?,
            };
            Ok(Arc::new(backend))
        }
    }
}

/// Retrieves one pack per plan beat.
pub fn retrieve_packs(
    plan: &BeatPlan,
    strategy: Strategy,
    assets: &Assets,
    settings: &RetrievalSettings,
) -> Result<Vec<EvidencePack>, HarnessError> {
    let ctx = assets.retrieval_context(settings);
    plan.beats
        .iter()
        .enumerate()
        .map(|(i, b)| Ok(retrieve(strategy, i, &b.bound_cq, &ctx, beat_seed(plan.seed, i))?))
        .collect()
}

pub fn write_packs(path: &Path, packs: &[EvidencePack]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for p in packs {
        text.push_str(&p.to_json_line());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_packs(path: &Path) -> Result<Vec<EvidencePack>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Artifact {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub persona: String,
    pub length: LengthTier,
    pub strategy: Strategy,
    pub run_index: usize,
    pub seed: u64,
}

impl RunSpec {
    pub fn id(&self) -> String {
        run_id(&self.persona, self.length, self.strategy, self.run_index)
    }
}

/// Every run of the matrix in (persona, length, strategy, index) config order.
pub fn expand_matrix(config: &ExperimentConfig) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for persona in &config.personas {
        for &length in &config.lengths {
            for &strategy in &config.strategies {
                for r in 0..config.runs_per_cell[persona] {
                    out.push(RunSpec {
                        persona: persona.clone(),
                        length,
                        strategy,
                        run_index: r,
                        seed: derive_seed(config.base_seed, persona, length, strategy, r),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub persona: String,
    pub length: LengthTier,
    pub strategy: Strategy,
    pub run_index: usize,
    pub seed: u64,
    pub seed_derivation: String,
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    pub module_versions: BTreeMap<String, String>,
    pub backend_id: String,
    pub input_hashes: BTreeMap<String, String>,
    /// Artifact file name → sha256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const SEED_DERIVATION: &str =
    "first 8 bytes (big-endian) of sha256(\"{base_seed}|{persona}|{length}|{strategy}|{run_index}\")";

pub struct Experiment<'a> {
    pub config: &'a ExperimentConfig,
    pub assets: &'a Assets,
    pub backend: Arc<dyn TextBackend>,
    /// Keep completed runs and continue partial stories.
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

impl Experiment<'_> {
    pub fn run_dir(&self, spec: &RunSpec) -> PathBuf {
        self.config.output_dir.join(RUNS_DIR).join(spec.id())
    }

    /// Runs one matrix entry end to end and writes its artifacts. Failures
    /// are recorded in the manifest and returned, never panicked.
    pub fn run_one(&self, spec: &RunSpec) -> RunOutcome {
        let dir = self.run_dir(spec);
        let started_at = chrono::Utc::now().to_rfc3339();
        let mut artifacts = BTreeMap::new();
        let result = self.execute(spec, &dir, &mut artifacts);
        let (status, error, report) = match result {
            Ok(r) => ("ok".to_string(), None, Some(r)),
            Err(e) => {
                log::error!("{}: {e}", spec.id());
                ("failed".to_string(), Some(e.to_string()), None)
            }
        };
        let manifest = RunManifest {
            run_id: spec.id(),
            persona: spec.persona.clone(),
            length: spec.length,
            strategy: spec.strategy,
            run_index: spec.run_index,
            seed: spec.seed,
            seed_derivation: SEED_DERIVATION.to_string(),
            config: serde_json::to_value(self.config).expect("serializable config"),
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            module_versions: [("storyrag".to_string(), env!("CARGO_PKG_VERSION").to_string())].into(),
            backend_id: self.backend.id(),
            input_hashes: self.assets.input_hashes.clone(),
            artifacts,
            status,
            error: error.clone(),
        };
        if let Err(e) = write_text(&dir.join(MANIFEST_FILE), &crate::canonical_json(&manifest)) {
            log::error!("{}: {e}", spec.id());
        }
        RunOutcome { spec: spec.clone(), report, error }
    }

    fn execute(
        &self,
        spec: &RunSpec,
        dir: &Path,
        artifacts: &mut BTreeMap<String, String>,
    ) -> Result<MetricReport, HarnessError> {
        let cfg = self.config;
        let assets = self.assets;
        let persona = assets.persona(&spec.persona)?;
        let mut record = |name: &str, text: &str| -> Result<(), HarnessError> {
            write_text(&dir.join(name), text)?;
            artifacts.insert(name.to_string(), sha256_hex(text.as_bytes()));
            Ok(())
        };

        let plan = build_beat_plan(persona, spec.length, spec.seed, &assets.planner_inputs())?;
        record(PLAN_FILE, &serialize_plan(&plan))?;

        let packs = retrieve_packs(&plan, spec.strategy, assets, &cfg.retrieval)?;
        let packs_text: String = packs.iter().map(|p| p.to_json_line() + "\n").collect();
        record(PACKS_FILE, &packs_text)?;

        let story_path = dir.join(STORY_FILE);
        let previous: Option<StoryOutput> =
            if self.resume && story_path.exists() { read_json(&story_path).ok() } else { None };
        let req = StoryRequest {
            plan: &plan,
            packs: &packs,
            persona,
            strategy: spec.strategy,
            prompt: &assets.prompt,
            config: &cfg.generator,
            metric: &cfg.metrics,
        };
        let mut checkpoint = |partial: &StoryOutput| {
            if let Err(e) = write_text(&story_path, &crate::canonical_json(partial)) {
                log::warn!("{}: checkpoint failed: {e}", spec.id());
            }
        };
        let story = generate_story(&req, self.backend.as_ref(), previous, &mut checkpoint)?;
        record(STORY_FILE, &crate::canonical_json(&story))?;

        let lint_cfg = LintConfig {
            local_names: assets
                .graph
                .terms()
                .filter_map(|t| t.as_iri().map(|i| crate::kg::local_name(i).to_string()))
                .collect(),
            ..LintConfig::with_variables(&assets.library.variable_names())
        };
        record(LINT_FILE, &crate::canonical_json(&lint_story(&story, &packs, &lint_cfg)))?;

        let report = evaluate_run(&spec.id(), &story, &packs, cfg.mode_for(spec.strategy), &cfg.metrics)?;
        record(METRICS_FILE, &crate::canonical_json(&report))?;
        Ok(report)
    }

    /// Runs the whole matrix on a pool of `config.workers` threads, then
    /// writes `aggregate.csv` and `report.md`.
    pub fn run(&self) -> Result<Vec<RunOutcome>, HarnessError> {
        let specs = expand_matrix(self.config);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let outcomes: Vec<RunOutcome> = pool.install(|| {
            specs
                .par_iter()
                .map(|spec| {
                    if self.resume {
                        let done = self.run_dir(spec).join(METRICS_FILE);
                        if let Ok(report) = read_json::<MetricReport>(&done) {
                            log::info!("{}: already complete", spec.id());
                            return RunOutcome { spec: spec.clone(), report: Some(report), error: None };
                        }
                    }
                    self.run_one(spec)
                })
                .collect()
        });
        let records: Vec<RunRecord> = outcomes.iter().map(RunRecord::from_outcome).collect();
        let cells = aggregate(self.config, &records);
        write_text(&self.config.output_dir.join(AGGREGATE_CSV), &render_csv(&cells))?;
        write_text(&self.config.output_dir.join(REPORT_MD), &render_markdown(&cells))?;
        Ok(outcomes)
    }
}

/// Loads assets, builds the backend and runs the matrix.
pub fn run_experiment(config: &ExperimentConfig, resume: bool) -> Result<Vec<RunOutcome>, HarnessError> {
    config.validate()?;
    let assets = Assets::load(&config.assets)?;
    for p in &config.personas {
        assets.persona(p)?;
    }
    let backend = build_backend(&config.backend)?;
    Experiment { config, assets: &assets, backend, resume }.run()
}
