use std::collections::{BTreeMap, BTreeSet};

use crate::kg::Term;

use super::QueryError;

/// A triple-pattern position or expression operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermPattern {
    Var(String),
    Const(Term),
    /// `{name}` placeholder, replaced by an IRI in [`QueryPlan::bind_parameters`].
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: TermPattern,
    pub predicate: TermPattern,
    pub object: TermPattern,
}

impl TriplePattern {
    pub fn positions(&self) -> [&TermPattern; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    fn positions_mut(&mut self) -> [&mut TermPattern; 3] {
        [&mut self.subject, &mut self.predicate, &mut self.object]
    }
}

/// FILTER expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Term(TermPattern),
    Eq(Box<Expr>, Box<Expr>),
    NotEq(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Element {
    Triple(TriplePattern),
    Bind { value: TermPattern, var: String },
    Filter(Expr),
    Optional(Vec<Element>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupConcat {
    pub var: String,
    pub distinct: bool,
    pub separator: String,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Var(String),
    GroupConcat(GroupConcat),
}

impl Projection {
    /// Output column name.
    pub fn name(&self) -> &str {
        match self {
            Projection::Var(v) => v,
            Projection::GroupConcat(g) => &g.alias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderKey {
    pub var: String,
    pub ascending: bool,
}

/// Parsed query in the supported SPARQL subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub prefixes: BTreeMap<String, String>,
    pub distinct: bool,
    pub projections: Vec<Projection>,
    pub patterns: Vec<Element>,
    pub group_by: Option<Vec<String>>,
    pub order_by: Vec<OrderKey>,
}

impl QueryPlan {
    /// Output column names in SELECT order.
    pub fn select_vars(&self) -> Vec<&str> {
        self.projections.iter().map(Projection::name).collect()
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &GroupConcat> {
        self.projections.iter().filter_map(|p| match p {
            Projection::GroupConcat(g) => Some(g),
            Projection::Var(_) => None,
        })
    }

    pub fn is_grouped(&self) -> bool {
        self.group_by.is_some() || self.aggregates().next().is_some()
    }

    /// Names of the placeholders still open in the plan.
    pub fn slots(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        visit_patterns(&self.patterns, &mut |tp| {
            if let TermPattern::Slot(name) = tp {
                out.insert(name.clone());
            }
        });
        out
    }

    pub fn is_bound(&self) -> bool {
        self.slots().is_empty()
    }

    /// Variables mentioned anywhere in the WHERE clause.
    pub fn pattern_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_vars(&self.patterns, &mut out);
        out
    }

    /// Returns a copy with every placeholder replaced by its IRI.
    pub fn bind_parameters(&self, bindings: &BTreeMap<String, String>) -> Result<QueryPlan, QueryError> {
        let slots = self.slots();
        if let Some(missing) = slots.iter().find(|s| !bindings.contains_key(*s)) {
            return Err(QueryError::MissingBinding(missing.clone()));
        }
        if let Some(extra) = bindings.keys().find(|k| !slots.contains(*k)) {
            return Err(QueryError::UnknownSlot(extra.clone()));
        }
        let mut plan = self.clone();
        visit_patterns_mut(&mut plan.patterns, &mut |tp| {
            if let TermPattern::Slot(name) = tp {
                *tp = TermPattern::Const(Term::iri(bindings[name.as_str()].clone()));
            }
        });
        Ok(plan)
    }
}

fn collect_vars(elements: &[Element], out: &mut BTreeSet<String>) {
    for e in elements {
        match e {
            Element::Triple(tp) => {
                for p in tp.positions() {
                    if let TermPattern::Var(v) = p {
                        out.insert(v.clone());
                    }
                }
            }
            Element::Bind { value, var } => {
                if let TermPattern::Var(v) = value {
                    out.insert(v.clone());
                }
                out.insert(var.clone());
            }
            Element::Filter(expr) => expr_vars(expr, out),
            Element::Optional(inner) => collect_vars(inner, out),
        }
    }
}

fn expr_vars(expr: &Expr, out: &mut BTreeSet<String>) {
    match expr {
        Expr::Term(TermPattern::Var(v)) => {
            out.insert(v.clone());
        }
        Expr::Term(_) => {}
        Expr::Eq(a, b) | Expr::NotEq(a, b) | Expr::And(a, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
    }
}

fn visit_patterns(elements: &[Element], f: &mut impl FnMut(&TermPattern)) {
    fn visit_expr(expr: &Expr, f: &mut impl FnMut(&TermPattern)) {
        match expr {
            Expr::Term(tp) => f(tp),
            Expr::Eq(a, b) | Expr::NotEq(a, b) | Expr::And(a, b) => {
                visit_expr(a, f);
                visit_expr(b, f);
            }
        }
    }
    for e in elements {
        match e {
            Element::Triple(tp) => tp.positions().into_iter().for_each(&mut *f),
            Element::Bind { value, .. } => f(value),
            Element::Filter(expr) => visit_expr(expr, f),
            Element::Optional(inner) => visit_patterns(inner, f),
        }
    }
}

fn visit_patterns_mut(elements: &mut [Element], f: &mut impl FnMut(&mut TermPattern)) {
    fn visit_expr(expr: &mut Expr, f: &mut impl FnMut(&mut TermPattern)) {
        match expr {
            Expr::Term(tp) => f(tp),
            Expr::Eq(a, b) | Expr::NotEq(a, b) | Expr::And(a, b) => {
                visit_expr(a, f);
                visit_expr(b, f);
            }
        }
    }
    for e in elements {
        match e {
            Element::Triple(tp) => tp.positions_mut().into_iter().for_each(&mut *f),
            Element::Bind { value, .. } => f(value),
            Element::Filter(expr) => visit_expr(expr, f),
            Element::Optional(inner) => visit_patterns_mut(inner, f),
        }
    }
}
