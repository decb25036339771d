//! Release gate over a KG and a CQ library: schema conformance, identifier
//! integrity and CQ coverage, run in that order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::{instantiate, CqLibrary};
use crate::kg::{vocab, Graph, Term, Triple};
use crate::query::execute;

pub const REGISTRY_FILE: &str = "vocab_registry.json";
pub const FIXTURE_FILE: &str = "cq_fixture_bindings.json";
pub const REPORT_FILE: &str = "validation_report.json";

pub const CHECK_SCHEMA: &str = "schema_conformance";
pub const CHECK_IDENTIFIERS: &str = "identifier_integrity";
pub const CHECK_CQ_COVERAGE: &str = "cq_coverage";

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("invalid IRI pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("invalid registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifierPolicy {
    pub project_namespace: String,
    pub iri_pattern: String,
    pub sameas_namespaces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyRegistry {
    /// Prefix → namespace IRI.
    pub namespaces: BTreeMap<String, String>,
    /// Optional closed term lists (local names) per prefix.
    #[serde(default)]
    pub declared_terms: BTreeMap<String, BTreeSet<String>>,
    pub identifiers: IdentifierPolicy,
}

impl VocabularyRegistry {
    pub fn load(path: &Path) -> Result<Self, ValidateError> {
        let input = |message: String| ValidateError::Input { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
        let reg: VocabularyRegistry = serde_json::from_str(&text).map_err(|e| input(e.to_string()))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), ValidateError> {
        if self.namespaces.is_empty() {
            return Err(ValidateError::Registry("no namespaces".into()));
        }
        for (prefix, ns) in &self.namespaces {
            let ok = url::Url::parse(ns).is_ok() && (ns.ends_with('/') || ns.ends_with('#'));
            if !ok {
                return Err(ValidateError::Registry(format!("{prefix}: {ns:?} is not an absolute IRI base")));
            }
        }
        if let Some(p) = self.declared_terms.keys().find(|p| !self.namespaces.contains_key(*p)) {
            return Err(ValidateError::Registry(format!("declared_terms for unknown prefix {p}")));
        }
        Regex::new(&self.identifiers.iri_pattern)?;
        Ok(())
    }

    /// `None` when the term is acceptable, else the reason.
    fn reject(&self, iri: &str) -> Option<String> {
        let Some((prefix, ns)) =
            self.namespaces.iter().filter(|(_, ns)| iri.starts_with(ns.as_str())).max_by_key(|(_, ns)| ns.len())
        else {
            return Some("outside every registered namespace".into());
        };
        let local = &iri[ns.len()..];
        match self.declared_terms.get(prefix) {
            Some(terms) if !terms.contains(local) => Some(format!("not a declared {prefix}: term")),
            _ => None,
        }
    }
}

/// CQ id → binding sets (slot → IRI).
pub type FixtureBindings = BTreeMap<String, Vec<BTreeMap<String, String>>>;

pub fn load_fixture(path: &Path) -> Result<FixtureBindings, ValidateError> {
    let input = |message: String| ValidateError::Input { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub subject: String,
    pub detail: String,
}

impl Finding {
    fn error(subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Finding { severity: Severity::Error, subject: subject.into(), detail: detail.into() }
    }

    fn warning(subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Finding { severity: Severity::Warning, subject: subject.into(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub findings: Vec<Finding>,
}

impl CheckResult {
    /// Fails iff any finding is an error.
    fn from_findings(name: &str, mut findings: Vec<Finding>) -> Self {
        findings.sort_by(|a, b| (&a.subject, &a.detail).cmp(&(&b.subject, &b.detail)));
        findings.dedup();
        let status = if findings.iter().any(|f| f.severity == Severity::Error) { Status::Fail } else { Status::Pass };
        CheckResult { name: name.to_string(), status, findings }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub overall: Status,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.overall == Status::Pass
    }

    /// 0 on pass, 1 on any failed check.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

fn example(t: &Triple) -> String {
    format!("{} {} {}", t.subject, t.predicate, t.object)
}

/// Every predicate and every rdf:type object must sit in a registered
/// namespace (and in its declared terms, when those are given).
pub fn check_schema_conformance(graph: &Graph, registry: &VocabularyRegistry) -> CheckResult {
    let mut offenders: BTreeMap<String, (String, Triple)> = BTreeMap::new();
    for t in graph.triples() {
        let mut candidates = vec![&t.predicate];
        if t.predicate.as_iri() == Some(vocab::RDF_TYPE) {
            candidates.push(&t.object);
        }
        for term in candidates {
            if let Some(iri) = term.as_iri() {
                if !offenders.contains_key(iri) {
                    if let Some(reason) = registry.reject(iri) {
                        offenders.insert(iri.to_string(), (reason, t.clone()));
                    }
                }
            }
        }
    }
    let findings = offenders
        .into_iter()
        .map(|(iri, (reason, t))| Finding::error(iri, format!("{reason}; e.g. {}", example(&t))))
        .collect();
    CheckResult::from_findings(CHECK_SCHEMA, findings)
}

/// (a) project subjects match the pattern; (b) no two unlinked IRIs share a
/// name and type set; (c) owl:sameAs targets are IRIs in a recognised
/// external namespace.
pub fn check_identifier_integrity(graph: &Graph, policy: &IdentifierPolicy) -> Result<CheckResult, ValidateError> {
    let pattern = Regex::new(&policy.iri_pattern)?;
    let mut findings = Vec::new();
    let subjects: BTreeSet<Term> = graph.triples().map(|t| t.subject).collect();
    for s in &subjects {
        if let Some(iri) = s.as_iri() {
            if iri.starts_with(&policy.project_namespace) && !pattern.is_match(iri) {
                findings.push(Finding::error(iri, format!("does not match {}", policy.iri_pattern)));
            }
        }
    }

    let name = Term::iri(vocab::SCHEMA_NAME);
    let rdf_type = Term::iri(vocab::RDF_TYPE);
    let same_as = Term::iri(vocab::OWL_SAME_AS);
    let mut by_signature: BTreeMap<(BTreeSet<String>, BTreeSet<Term>), Vec<&Term>> = BTreeMap::new();
    for s in subjects.iter().filter(|s| s.is_iri()) {
        let names: BTreeSet<String> =
            graph.match_pattern(Some(s), Some(&name), None).into_iter().map(|t| t.object.value().to_string()).collect();
        if names.is_empty() {
            continue;
        }
        let types: BTreeSet<Term> =
            graph.match_pattern(Some(s), Some(&rdf_type), None).into_iter().map(|t| t.object).collect();
        by_signature.entry((names, types)).or_default().push(s);
    }
    let linked = |a: &Term, b: &Term| {
        graph.contains(&Triple::new(a.clone(), same_as.clone(), b.clone()))
            || graph.contains(&Triple::new(b.clone(), same_as.clone(), a.clone()))
    };
    for ((names, _), group) in &by_signature {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if !linked(a, b) {
                    let label = names.iter().cloned().collect::<Vec<_>>().join(" / ");
                    findings.push(Finding::error(
                        a.value(),
                        format!("possible duplicate of {} (same name {label:?} and types, no owl:sameAs)", b.value()),
                    ));
                }
            }
        }
    }

    for t in graph.match_pattern(None, Some(&same_as), None) {
        let ok = t.object.as_iri().is_some_and(|iri| {
            url::Url::parse(iri).is_ok() && policy.sameas_namespaces.iter().any(|ns| iri.starts_with(ns.as_str()))
        });
        if !ok {
            findings.push(Finding::error(
                t.subject.value(),
                format!("owl:sameAs target {} is not in a recognised external namespace", t.object),
            ));
        }
    }
    Ok(CheckResult::from_findings(CHECK_IDENTIFIERS, findings))
}

/// Every CQ runs and returns rows for each fixture binding set.
pub fn check_cq_coverage(graph: &Graph, library: &CqLibrary, fixture: &FixtureBindings) -> CheckResult {
    let mut findings = Vec::new();
    if library.is_empty() {
        findings.push(Finding::warning("library", "no competency questions to run"));
    }
    for template in library.templates() {
        let id = &template.id;
        let sets = fixture.get(id).map(Vec::as_slice).unwrap_or_default();
        if sets.is_empty() {
            findings.push(Finding::error(id, "no fixture bindings"));
        }
        for bindings in sets {
            let shown = bindings.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ");
            match instantiate(library, id, bindings, graph) {
                Err(e) => findings.push(Finding::error(id, format!("[{shown}] {e}"))),
                Ok(bound) => match execute(&bound.bound_plan, graph) {
                    Err(e) => findings.push(Finding::error(id, format!("[{shown}] {e}"))),
                    Ok(table) if table.is_empty() => findings.push(Finding::error(id, format!("[{shown}] no rows"))),
                    Ok(_) => {}
                },
            }
        }
    }
    for id in fixture.keys().filter(|id| library.get(id).is_none()) {
        findings.push(Finding::warning(id, "fixture bindings for a CQ not in the library"));
    }
    CheckResult::from_findings(CHECK_CQ_COVERAGE, findings)
}

pub fn run_gate(
    graph: &Graph,
    registry: &VocabularyRegistry,
    library: &CqLibrary,
    fixture: &FixtureBindings,
) -> Result<ValidationReport, ValidateError> {
    let checks = vec![
        check_schema_conformance(graph, registry),
        check_identifier_integrity(graph, &registry.identifiers)?,
        check_cq_coverage(graph, library, fixture),
    ];
    let overall = if checks.iter().all(CheckResult::passed) { Status::Pass } else { Status::Fail };
    Ok(ValidationReport { checks, overall })
}
