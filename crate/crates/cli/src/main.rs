//! `storyrag` command line: composable pipeline stages plus the experiment
//! runner. Exit codes: 0 success, 1 check or run failure, 2 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use storyrag::canonical_json;
use storyrag::eval::{default_mode, evaluate_run, SupportMode};
use storyrag::generate::{generate_story, StoryOutput, StoryRequest};
use storyrag::harness::{
    aggregate_records, build_backend, cells_of, collect_runs, read_json, read_packs, render_csv, render_markdown,
    retrieve_packs, write_packs, write_text, AssetPaths, Assets, BackendConfig, BackendKind, ExperimentConfig,
    AGGREGATE_CSV, REPORT_MD,
};
use storyrag::kg::{load_turtle, write_turtle};
use storyrag::planner::{build_beat_plan, deserialize_plan, serialize_plan, LengthTier};
use storyrag::retrieve::Strategy;
use storyrag::validate::{load_fixture, run_gate, VocabularyRegistry, FIXTURE_FILE, REGISTRY_FILE, REPORT_FILE};

#[derive(Parser)]
#[command(name = "storyrag", version, about = "Knowledge-graph grounded story generation and evaluation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON); supplies asset paths and settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory with the default asset layout, used without --config.
    #[arg(long, global = true, default_value = "data")]
    data: PathBuf,
    #[arg(long, global = true)]
    kg: Option<PathBuf>,
    #[arg(long = "cq-dir", global = true)]
    cq_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    personas: Option<PathBuf>,
    #[arg(long, global = true)]
    snippets: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Mock,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a Turtle file, print its profile and write a snapshot.
    Ingest,
    /// Run the release gate over the KG and CQ library.
    Validate {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Build a seeded beat plan.
    Plan {
        #[arg(long)]
        persona: String,
        #[arg(long)]
        length: LengthTier,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Retrieve one evidence pack per plan beat.
    Retrieve {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        strategy: Strategy,
    },
    /// Generate a story from a plan and its packs.
    Generate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        packs: PathBuf,
        /// Continue a partial story at --out.
        #[arg(long)]
        resume: bool,
    },
    /// Score a story against its packs.
    Evaluate {
        #[arg(long)]
        story: PathBuf,
        #[arg(long)]
        packs: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run the full persona × length × strategy matrix.
    RunExperiment {
        /// Keep finished runs and continue partial stories.
        #[arg(long)]
        resume: bool,
    },
    /// Rebuild aggregate.csv and report.md from run directories.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Factlet,
    Triple,
    Fallback,
}

impl From<ModeArg> for SupportMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Factlet => SupportMode::Factlet,
            ModeArg::Triple => SupportMode::Triple,
            ModeArg::Fallback => SupportMode::Fallback,
        }
    }
}

/// An error that maps to exit code 1 rather than 2.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// Error chain without causes already spelled out by the outer message.
fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

impl Global {
    fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::mock(&self.data, Path::new("out")),
        };
        if let Some(p) = &self.kg {
            cfg.assets.kg = p.clone();
        }
        if let Some(p) = &self.cq_dir {
            cfg.assets.cq_dir = p.clone();
        }
        if let Some(p) = &self.personas {
            cfg.assets.personas = p.clone();
        }
        if let Some(p) = &self.snippets {
            cfg.assets.snippets = p.clone();
        }
        if let Some(b) = self.backend {
            match b {
                BackendArg::Mock => cfg.backend = BackendConfig::mock(),
                BackendArg::Http => cfg.backend.id = BackendKind::Http,
            }
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn assets(&self) -> Result<(ExperimentConfig, Assets)> {
        let cfg = self.experiment_config()?;
        let assets = Assets::load(&cfg.assets)?;
        Ok((cfg, assets))
    }

    fn data_paths(&self) -> AssetPaths {
        self.experiment_config().map(|c| c.assets).unwrap_or_else(|_| AssetPaths::data_dir(&self.data))
    }

    fn out_file(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest => ingest(g),
        Command::Validate { registry, fixture } => validate(g, registry.as_deref(), fixture.as_deref()),
        Command::Plan { persona, length, seed } => {
            let (_, assets) = g.assets()?;
            let plan = build_beat_plan(assets.persona(persona)?, *length, *seed, &assets.planner_inputs())?;
            emit(g.out.as_deref(), &serialize_plan(&plan))
        }
        Command::Retrieve { plan, strategy } => {
            let (cfg, assets) = g.assets()?;
            let plan = load_plan(plan, &assets)?;
            let packs = retrieve_packs(&plan, *strategy, &assets, &cfg.retrieval)?;
            let out = g.out_file("packs.jsonl");
            write_packs(&out, &packs)?;
            println!("{} packs written to {}", packs.len(), out.display());
            Ok(())
        }
        Command::Generate { plan, packs, resume } => {
            let (cfg, assets) = g.assets()?;
            let plan = load_plan(plan, &assets)?;
            let packs = read_packs(packs)?;
            let strategy = packs.first().map(|p| p.strategy).unwrap_or(Strategy::Kg);
            let backend = build_backend(&cfg.backend)?;
            let out = g.out_file("story.json");
            let previous: Option<StoryOutput> = if *resume && out.exists() { Some(read_json(&out)?) } else { None };
            let req = StoryRequest {
                plan: &plan,
                packs: &packs,
                persona: assets.persona(&plan.persona_id)?,
                strategy,
                prompt: &assets.prompt,
                config: &cfg.generator,
                metric: &cfg.metrics,
            };
            let mut checkpoint = |s: &StoryOutput| {
                if let Err(e) = write_text(&out, &canonical_json(s)) {
                    log::warn!("checkpoint failed: {e}");
                }
            };
            let story = generate_story(&req, backend.as_ref(), previous, &mut checkpoint)?;
            write_text(&out, &canonical_json(&story))?;
            println!(
                "{} sentences in {} beats written to {}",
                story.sentence_count(),
                story.beats.len(),
                out.display()
            );
            Ok(())
        }
        Command::Evaluate { story, packs, mode } => {
            let cfg = g.experiment_config()?;
            let story: StoryOutput = read_json(story)?;
            let packs = read_packs(packs)?;
            let mode = mode.map(SupportMode::from).unwrap_or_else(|| {
                if g.config.is_some() {
                    cfg.mode_for(story.strategy)
                } else {
                    default_mode(story.strategy)
                }
            });
            let id = story.plan_ref.trim_end_matches(".json").to_string();
            let report = evaluate_run(&id, &story, &packs, mode, &cfg.metrics)?;
            emit(g.out.as_deref(), &canonical_json(&report))
        }
        Command::RunExperiment { resume } => {
            let mut cfg = g.experiment_config()?;
            if let Some(out) = &g.out {
                cfg.output_dir = out.clone();
            }
            let outcomes = storyrag::harness::run_experiment(&cfg, *resume)?;
            let failed: Vec<_> = outcomes.iter().filter(|o| o.error.is_some()).collect();
            println!(
                "{} runs in {} cells; aggregate at {}",
                outcomes.len(),
                cfg.cell_count(),
                cfg.output_dir.join(AGGREGATE_CSV).display()
            );
            if !failed.is_empty() {
                for o in &failed {
                    eprintln!("{}: {}", o.spec.id(), o.error.as_deref().unwrap_or_default());
                }
                return Err(CheckFailed(format!("{} run(s) failed", failed.len())).into());
            }
            Ok(())
        }
        Command::Report => {
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let (records, missing) = collect_runs(&dir)?;
            for m in &missing {
                eprintln!("missing: {m}");
            }
            if records.iter().all(|r| r.report.is_none()) {
                bail!("no completed runs under {}", dir.display());
            }
            let cells = aggregate_records(&cells_of(&records), &records);
            write_text(&dir.join(AGGREGATE_CSV), &render_csv(&cells))?;
            let md = render_markdown(&cells);
            write_text(&dir.join(REPORT_MD), &md)?;
            print!("{md}");
            Ok(())
        }
    }
}

fn load_plan(path: &Path, assets: &Assets) -> Result<storyrag::planner::BeatPlan> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(deserialize_plan(&text, &assets.library)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_text(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn ingest(g: &Global) -> Result<()> {
    let path = g.kg.clone().unwrap_or_else(|| g.data_paths().kg);
    let graph = load_turtle(&path)?;
    let profile = canonical_json(&graph.profile());
    print!("{profile}");
    if let Some(dir) = &g.out {
        write_text(&dir.join("profile.json"), &profile)?;
        write_text(&dir.join("graph.ttl"), &write_turtle(&graph))?;
    }
    Ok(())
}

fn validate(g: &Global, registry: Option<&Path>, fixture: Option<&Path>) -> Result<()> {
    let paths = g.data_paths();
    let kg = g.kg.clone().unwrap_or(paths.kg);
    let cq_dir = g.cq_dir.clone().unwrap_or(paths.cq_dir);
    let data_root = cq_dir.parent().map(Path::to_path_buf).unwrap_or_default();
    let registry = registry.map(Path::to_path_buf).unwrap_or_else(|| data_root.join(REGISTRY_FILE));
    let fixture = fixture.map(Path::to_path_buf).unwrap_or_else(|| data_root.join(FIXTURE_FILE));

    let graph = load_turtle(&kg)?;
    let library = storyrag::cq::load_library(&cq_dir)?;
    let registry = VocabularyRegistry::load(&registry)?;
    let fixture = load_fixture(&fixture)?;
    let report = run_gate(&graph, &registry, &library, &fixture)?;
    let text = canonical_json(&report);
    let out = g.out_file(REPORT_FILE);
    write_text(&out, &text)?;
    for c in &report.checks {
        println!("{:<22} {:?} ({} findings)", c.name, c.status, c.findings.len());
    }
    if !report.passed() {
        return Err(CheckFailed(format!("validation failed; see {}", out.display())).into());
    }
    Ok(())
}
