//! Python bindings. Structured values cross the boundary as plain Python
//! objects (dicts, lists, strings) built from the crate's JSON forms.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use storyrag::eval::{default_mode, evaluate_run, MetricConfig, SupportMode};
use storyrag::generate::{generate_story, StoryOutput, StoryRequest};
use storyrag::harness::{build_backend, retrieve_packs, Assets, BackendConfig, ExperimentConfig};
use storyrag::planner::{build_beat_plan, deserialize_plan, serialize_plan, LengthTier};
use storyrag::retrieve::{EvidencePack, Strategy};
use storyrag::validate::{load_fixture, run_gate, VocabularyRegistry, FIXTURE_FILE, REGISTRY_FILE};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn parse<T: FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(value_err)
}

fn parse_mode(s: &str) -> PyResult<SupportMode> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(value_err)
}

/// An immutable RDF graph.
#[pyclass(frozen)]
struct Graph(storyrag::kg::Graph);

#[pymethods]
impl Graph {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        storyrag::kg::load_turtle(&path).map(Graph).map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        storyrag::kg::parse_turtle(text).map(Graph).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn profile(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.profile())
    }

    /// Rows as dicts of N-Triples rendered terms, `None` for unbound cells.
    fn query<'py>(&self, py: Python<'py>, sparql: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let plan = storyrag::query::parse_query(sparql).map_err(value_err)?;
        let table = storyrag::query::execute(&plan, &self.0).map_err(value_err)?;
        table
            .rows
            .iter()
            .map(|row| {
                let d = PyDict::new(py);
                for (col, cell) in table.columns.iter().zip(row) {
                    d.set_item(col, cell.as_ref().map(|t| t.to_string()))?;
                }
                Ok(d)
            })
            .collect()
    }

    fn to_turtle(&self) -> String {
        storyrag::kg::write_turtle(&self.0)
    }
}

/// Loaded assets plus experiment settings; runs the pipeline stage by stage.
#[pyclass(frozen)]
struct Pipeline {
    config: ExperimentConfig,
    assets: Assets,
}

#[pymethods]
impl Pipeline {
    /// Uses `config` (an experiment JSON file) if given, else the default
    /// layout under `data_dir` with the mock backend.
    #[new]
    #[pyo3(signature = (data_dir = None, config = None))]
    fn new(data_dir: Option<PathBuf>, config: Option<PathBuf>) -> PyResult<Self> {
        let config = match (config, data_dir) {
            (Some(path), _) => ExperimentConfig::load(&path).map_err(value_err)?,
            (None, Some(dir)) => ExperimentConfig::mock(&dir, Path::new("out")),
            (None, None) => return Err(PyValueError::new_err("data_dir or config is required")),
        };
        let assets = Assets::load(&config.assets).map_err(value_err)?;
        Ok(Pipeline { config, assets })
    }

    fn personas(&self) -> Vec<String> {
        self.assets.personas.keys().cloned().collect()
    }

    /// Plan JSON text.
    #[pyo3(signature = (persona, length, seed = 0))]
    fn plan(&self, persona: &str, length: &str, seed: u64) -> PyResult<String> {
        let persona = self.assets.persona(persona).map_err(value_err)?;
        let plan = build_beat_plan(persona, parse::<LengthTier>(length)?, seed, &self.assets.planner_inputs())
            .map_err(value_err)?;
        Ok(serialize_plan(&plan))
    }

    fn retrieve(&self, py: Python<'_>, plan: &str, strategy: &str) -> PyResult<Py<PyAny>> {
        let plan = deserialize_plan(plan, &self.assets.library).map_err(value_err)?;
        let packs = retrieve_packs(&plan, parse::<Strategy>(strategy)?, &self.assets, &self.config.retrieval)
            .map_err(value_err)?;
        to_py(py, &packs)
    }

    /// Story dict. `backend` is "mock" or "config" (the configured backend).
    #[pyo3(signature = (plan, packs, backend = "mock"))]
    fn generate(&self, py: Python<'_>, plan: &str, packs: &Bound<'_, PyAny>, backend: &str) -> PyResult<Py<PyAny>> {
        let plan = deserialize_plan(plan, &self.assets.library).map_err(value_err)?;
        let packs: Vec<EvidencePack> = from_py(packs)?;
        let backend_config = match backend {
            "mock" => BackendConfig::mock(),
            "config" => self.config.backend.clone(),
            other => return Err(PyValueError::new_err(format!("unknown backend '{other}'"))),
        };
        let backend = build_backend(&backend_config).map_err(value_err)?;
        let req = StoryRequest {
            plan: &plan,
            packs: &packs,
            persona: self.assets.persona(&plan.persona_id).map_err(value_err)?,
            strategy: packs.first().map(|p| p.strategy).unwrap_or(Strategy::Kg),
            prompt: &self.assets.prompt,
            config: &self.config.generator,
            metric: &self.config.metrics,
        };
        let story = py
            .detach(|| generate_story(&req, backend.as_ref(), None, &mut |_| {}))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py(py, &story)
    }

    #[pyo3(signature = (story, packs, mode = None))]
    fn evaluate(
        &self,
        py: Python<'_>,
        story: &Bound<'_, PyAny>,
        packs: &Bound<'_, PyAny>,
        mode: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let story: StoryOutput = from_py(story)?;
        let packs: Vec<EvidencePack> = from_py(packs)?;
        let mode = match mode {
            Some(m) => parse_mode(m)?,
            None => self.config.mode_for(story.strategy),
        };
        let id = story.plan_ref.trim_end_matches(".json").to_string();
        let report = evaluate_run(&id, &story, &packs, mode, &self.config.metrics).map_err(value_err)?;
        to_py(py, &report)
    }
}

/// Runs the experiment matrix; returns one dict per run.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None, resume = false))]
fn run_experiment(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>, resume: bool) -> PyResult<Py<PyAny>> {
    let mut cfg = ExperimentConfig::load(&config).map_err(value_err)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let outcomes = py.detach(|| storyrag::harness::run_experiment(&cfg, resume)).map_err(value_err)?;
    let rows: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| serde_json::json!({"run_id": o.spec.id(), "seed": o.spec.seed, "report": o.report, "error": o.error}))
        .collect();
    to_py(py, &rows)
}

/// Release gate over a data directory with the default layout.
#[pyfunction]
fn validate(py: Python<'_>, data_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let paths = storyrag::harness::AssetPaths::data_dir(&data_dir);
    let graph = storyrag::kg::load_turtle(&paths.kg).map_err(value_err)?;
    let library = storyrag::cq::load_library(&paths.cq_dir).map_err(value_err)?;
    let registry = VocabularyRegistry::load(&data_dir.join(REGISTRY_FILE)).map_err(value_err)?;
    let fixture = load_fixture(&data_dir.join(FIXTURE_FILE)).map_err(value_err)?;
    let report = run_gate(&graph, &registry, &library, &fixture).map_err(value_err)?;
    to_py(py, &report)
}

/// Flesch reading ease of `text`.
#[pyfunction]
fn fre(text: &str) -> PyResult<f64> {
    storyrag::eval::fre(text, &MetricConfig::default()).map_err(value_err)
}

/// Default support mode name for a retrieval strategy.
#[pyfunction]
fn support_mode(strategy: &str) -> PyResult<String> {
    match serde_json::to_value(default_mode(parse::<Strategy>(strategy)?)).map_err(value_err)? {
        serde_json::Value::String(s) => Ok(s),
        other => Ok(other.to_string()),
    }
}

#[pyfunction]
fn derive_seed(base_seed: u64, persona: &str, length: &str, strategy: &str, run_index: usize) -> PyResult<u64> {
    Ok(storyrag::harness::derive_seed(base_seed, persona, parse(length)?, parse(strategy)?, run_index))
}

#[pymodule]
fn storyrag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(fre, m)?)?;
    m.add_function(wrap_pyfunction!(support_mode, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
