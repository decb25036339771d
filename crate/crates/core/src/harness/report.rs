use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::MetricReport;
use crate::planner::LengthTier;
use crate::retrieve::Strategy;

use super::{
    read_json, ExperimentConfig, HarnessError, RunManifest, RunOutcome, MANIFEST_FILE, METRICS_FILE, RUNS_DIR,
};

/// Column order of `aggregate.csv`. The first eight mirror the published
/// tables; the last three count runs per cell.
pub const CSV_COLUMNS: [&str; 11] = [
    "persona",
    "length",
    "strategy",
    "support_pct",
    "coverage_pct",
    "fre",
    "global_cohesion",
    "local_cohesion",
    "runs",
    "failed_runs",
    "suppressed_only_runs",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub persona: String,
    pub length: LengthTier,
    pub strategy: Strategy,
    pub report: Option<MetricReport>,
}

impl RunRecord {
    pub fn from_outcome(o: &RunOutcome) -> Self {
        RunRecord {
            run_id: o.spec.id(),
            persona: o.spec.persona.clone(),
            length: o.spec.length,
            strategy: o.spec.strategy,
            report: o.report.clone(),
        }
    }
}

/// Reads every `runs/<id>/manifest.json` under `out_dir` with its report.
/// Returns the records and the run directories whose report is missing.
pub fn collect_runs(out_dir: &Path) -> Result<(Vec<RunRecord>, Vec<String>), HarnessError> {
    let runs = out_dir.join(RUNS_DIR);
    let mut dirs: Vec<_> = std::fs::read_dir(&runs)
        .map_err(|e| HarnessError::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for dir in dirs {
        let Ok(manifest) = read_json::<RunManifest>(&dir.join(MANIFEST_FILE)) else {
            missing.push(dir.join(MANIFEST_FILE).display().to_string());
            continue;
        };
        let report = match read_json::<MetricReport>(&dir.join(METRICS_FILE)) {
            Ok(r) => Some(r),
            Err(_) => {
                missing.push(dir.join(METRICS_FILE).display().to_string());
                None
            }
        };
        records.push(RunRecord {
            run_id: manifest.run_id,
            persona: manifest.persona,
            length: manifest.length,
            strategy: manifest.strategy,
            report,
        });
    }
    Ok((records, missing))
}

/// Per-cell means over runs with at least one evaluable section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub persona: String,
    pub length: LengthTier,
    pub strategy: Strategy,
    pub support_pct: Option<f64>,
    pub coverage_pct: Option<f64>,
    pub fre: Option<f64>,
    pub global_cohesion: Option<f64>,
    pub local_cohesion: Option<f64>,
    pub runs: usize,
    pub failed_runs: usize,
    pub suppressed_only_runs: usize,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Cells in the given order; cells without runs are still listed.
pub fn aggregate_records(cells: &[(String, LengthTier, Strategy)], records: &[RunRecord]) -> Vec<CellSummary> {
    cells
        .iter()
        .map(|(persona, length, strategy)| {
            let runs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| &r.persona == persona && r.length == *length && r.strategy == *strategy)
                .collect();
            let reports: Vec<&MetricReport> =
                runs.iter().filter_map(|r| r.report.as_ref()).filter(|r| r.evaluable()).collect();
            CellSummary {
                persona: persona.clone(),
                length: *length,
                strategy: *strategy,
                support_pct: mean(reports.iter().map(|r| r.support_pct_mean)),
                coverage_pct: mean(reports.iter().map(|r| r.coverage_pct_mean)),
                fre: mean(reports.iter().map(|r| r.fre_mean)),
                global_cohesion: mean(reports.iter().map(|r| r.global_cohesion)),
                local_cohesion: mean(reports.iter().map(|r| r.local_cohesion_mean)),
                runs: runs.len(),
                failed_runs: runs.iter().filter(|r| r.report.is_none()).count(),
                suppressed_only_runs: runs.iter().filter(|r| r.report.as_ref().is_some_and(|r| !r.evaluable())).count(),
            }
        })
        .collect()
}

/// Cells in config order: persona, then length, then strategy.
pub fn aggregate(config: &ExperimentConfig, records: &[RunRecord]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for p in &config.personas {
        for l in &config.lengths {
            for s in &config.strategies {
                cells.push((p.clone(), *l, *s));
            }
        }
    }
    aggregate_records(&cells, records)
}

/// Cells found in `records`, sorted by persona, length and strategy.
pub fn cells_of(records: &[RunRecord]) -> Vec<(String, LengthTier, Strategy)> {
    let mut cells: Vec<_> = records.iter().map(|r| (r.persona.clone(), r.length, r.strategy)).collect();
    cells.sort();
    cells.dedup();
    cells
}

fn fmt(v: Option<f64>, places: usize) -> String {
    v.map(|x| format!("{x:.places$}")).unwrap_or_else(|| "NA".into())
}

/// Percentages and FRE to 2 decimals, cohesion to 3; "NA" when a cell has
/// no evaluable run.
pub fn render_csv(cells: &[CellSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for c in cells {
        w.write_record([
            c.persona.clone(),
            c.length.to_string(),
            c.strategy.to_string(),
            fmt(c.support_pct, 2),
            fmt(c.coverage_pct, 2),
            fmt(c.fre, 2),
            fmt(c.global_cohesion, 3),
            fmt(c.local_cohesion, 3),
            c.runs.to_string(),
            c.failed_runs.to_string(),
            c.suppressed_only_runs.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn persona_label(id: &str) -> String {
    let mut c = id.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Two tables: grounding (support, coverage) and readability/cohesion
/// (FRE, global, local). Cells holding runs with every beat suppressed get
/// a footnote mark.
pub fn render_markdown(cells: &[CellSummary]) -> String {
    let mut notes: BTreeMap<String, String> = BTreeMap::new();
    let mark = |c: &CellSummary, notes: &mut BTreeMap<String, String>| -> String {
        let mut parts = Vec::new();
        if c.suppressed_only_runs > 0 {
            parts.push(format!("{} of {} run(s) had every beat suppressed", c.suppressed_only_runs, c.runs));
        }
        if c.failed_runs > 0 {
            parts.push(format!("{} run(s) failed", c.failed_runs));
        }
        if parts.is_empty() {
            return String::new();
        }
        let key = format!("{} {} {}", persona_label(&c.persona), c.length, c.strategy);
        notes.insert(key, parts.join("; "));
        let n = notes.len();
        format!(" [^{n}]")
    };
    let mut out = String::from("# Results\n\nMeans per cell over runs with at least one evaluable section.\n\n");
    out.push_str("## Grounding\n\n| Persona | Length | Strategy | Support % | Coverage % |\n|---|---|---|---:|---:|\n");
    let mut marks = Vec::new();
    for c in cells {
        let m = mark(c, &mut notes);
        let _ = writeln!(
            out,
            "| {}{m} | {} | {} | {} | {} |",
            persona_label(&c.persona),
            c.length,
            c.strategy,
            fmt(c.support_pct, 2),
            fmt(c.coverage_pct, 2)
        );
        marks.push(m);
    }
    out.push_str("\n## Readability and cohesion\n\n| Persona | Length | Strategy | FRE | Glob | Loc |\n|---|---|---|---:|---:|---:|\n");
    for (c, m) in cells.iter().zip(&marks) {
        let _ = writeln!(
            out,
            "| {}{m} | {} | {} | {} | {} | {} |",
            persona_label(&c.persona),
            c.length,
            c.strategy,
            fmt(c.fre, 2),
            fmt(c.global_cohesion, 3),
            fmt(c.local_cohesion, 3)
        );
    }
    if !notes.is_empty() {
        out.push('\n');
        let ordered: Vec<(String, String)> = cells
            .iter()
            .map(|c| format!("{} {} {}", persona_label(&c.persona), c.length, c.strategy))
            .filter_map(|k| notes.get(&k).map(|v| (k, v.clone())))
            .collect();
        for (i, (k, v)) in ordered.iter().enumerate() {
            let _ = writeln!(out, "[^{}]: {k}: {v}.", i + 1);
        }
    }
    out
}
