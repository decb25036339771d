use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{MetricConfig, SupportMode};
use crate::generate::GeneratorConfig;
use crate::planner::LengthTier;
use crate::retrieve::{GraphRagConfig, Strategy, DEFAULT_CAP, DEFAULT_K};

use super::HarnessError;

/// Input locations. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetPaths {
    pub kg: PathBuf,
    pub cq_dir: PathBuf,
    pub personas: PathBuf,
    pub snippets: PathBuf,
    pub beats: PathBuf,
    pub slot_types: PathBuf,
    pub verbalize: PathBuf,
    pub prompt: PathBuf,
}

impl AssetPaths {
    /// The layout of the shipped `data/` directory.
    pub fn data_dir(root: &Path) -> Self {
        AssetPaths {
            kg: root.join("kg/liveaid_fixture.ttl"),
            cq_dir: root.join("cq"),
            personas: root.join("personas"),
            snippets: root.join("snippets"),
            beats: root.join("beats.json"),
            slot_types: root.join("slot_types.json"),
            verbalize: root.join("verbalize.json"),
            prompt: root.join("prompts/surface.txt"),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.kg,
            &mut self.cq_dir,
            &mut self.personas,
            &mut self.snippets,
            &mut self.beats,
            &mut self.slot_types,
            &mut self.verbalize,
            &mut self.prompt,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// May be `${VAR}`; expanded only when the backend is built.
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
}

fn default_timeout() -> u64 {
    60
}

fn default_concurrency() -> usize {
    4
}

impl BackendConfig {
    pub fn mock() -> Self {
        BackendConfig {
            id: BackendKind::Mock,
            endpoint: None,
            model: None,
            api_key: None,
            timeout_secs: default_timeout(),
            max_concurrent: default_concurrency(),
        }
    }

    /// The API key with a `${VAR}` reference replaced from the environment.
    pub fn resolved_api_key(&self) -> Result<Option<String>, HarnessError> {
        let Some(raw) = &self.api_key else { return Ok(None) };
        match raw.strip_prefix("${").and_then(|r| r.strip_suffix('}')) {
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| HarnessError::Config(format!("environment variable {var} is not set"))),
            None => Ok(Some(raw.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSettings {
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub graph_rag: GraphRagConfig,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_k() -> usize {
    DEFAULT_K
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings { cap: DEFAULT_CAP, k: DEFAULT_K, graph_rag: GraphRagConfig::default() }
    }
}

fn default_modes() -> BTreeMap<Strategy, SupportMode> {
    Strategy::ALL.iter().map(|s| (*s, crate::eval::default_mode(*s))).collect()
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub personas: Vec<String>,
    pub lengths: Vec<LengthTier>,
    pub strategies: Vec<Strategy>,
    pub runs_per_cell: BTreeMap<String, usize>,
    pub base_seed: u64,
    pub backend: BackendConfig,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    /// Support/coverage mode per strategy.
    #[serde(default = "default_modes")]
    pub eval_modes: BTreeMap<Strategy, SupportMode>,
    pub assets: AssetPaths,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Reads a config and resolves relative asset and output paths.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.assets.resolve(base);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.personas.is_empty() || self.lengths.is_empty() || self.strategies.is_empty() {
            return bad("personas, lengths and strategies must be non-empty".into());
        }
        for p in &self.personas {
            match self.runs_per_cell.get(p) {
                Some(n) if *n >= 1 => {}
                _ => return bad(format!("runs_per_cell for {p} must be at least 1")),
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.metrics.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.retrieval.graph_rag.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.personas.len() * self.lengths.len() * self.strategies.len()
    }

    pub fn mode_for(&self, strategy: Strategy) -> SupportMode {
        self.eval_modes.get(&strategy).copied().unwrap_or_else(|| crate::eval::default_mode(strategy))
    }

    /// Offline mock configuration over the shipped `data/` directory.
    pub fn mock(data_dir: &Path, output_dir: &Path) -> Self {
        ExperimentConfig {
            personas: vec!["emma".into(), "luca".into()],
            lengths: LengthTier::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            runs_per_cell: [("emma".to_string(), 1), ("luca".to_string(), 1)].into(),
            base_seed: 1985,
            backend: BackendConfig::mock(),
            retrieval: RetrievalSettings::default(),
            generator: GeneratorConfig::default(),
            metrics: MetricConfig::default(),
            eval_modes: default_modes(),
            assets: AssetPaths::data_dir(data_dir),
            output_dir: output_dir.to_path_buf(),
            workers: default_workers(),
        }
    }
}
