//! Brute-force reference evaluator for the query subset.
//!
//! Enumerates variable assignments over every term of the graph plus the
//! query constants, checking triple membership against a plain hash set.
//! No indexes and no join ordering.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use storyrag::kg::{Graph, Term, Triple};
use storyrag::query::{Element, Expr, Projection, QueryPlan, TermPattern};

pub type Assignment = BTreeMap<String, Term>;

pub struct Oracle {
    triples: HashSet<Triple>,
    domain: Vec<Term>,
}

impl Oracle {
    pub fn new(graph: &Graph, plan: &QueryPlan) -> Self {
        let triples: HashSet<Triple> = graph.triples().collect();
        let mut domain: BTreeSet<Term> = BTreeSet::new();
        for t in &triples {
            domain.insert(t.subject.clone());
            domain.insert(t.predicate.clone());
            domain.insert(t.object.clone());
        }
        collect_consts(&plan.patterns, &mut domain);
        Oracle { triples, domain: domain.into_iter().collect() }
    }

    /// All solutions of a group extending `base`.
    fn solve(&self, group: &[Element], base: &Assignment) -> Vec<Assignment> {
        let mut required: Vec<String> = Vec::new();
        for e in group {
            match e {
                Element::Triple(tp) => {
                    for p in [&tp.subject, &tp.predicate, &tp.object] {
                        if let TermPattern::Var(v) = p {
                            if !base.contains_key(v) && !required.contains(v) {
                                required.push(v.clone());
                            }
                        }
                    }
                }
                Element::Bind { var, .. } if !base.contains_key(var) && !required.contains(var) => {
                    required.push(var.clone());
                }
                _ => {}
            }
        }
        let mut found = Vec::new();
        let mut current = base.clone();
        self.enumerate(group, &required, 0, &mut current, &mut found);

        let mut results = Vec::new();
        for sol in found {
            let mut extended = vec![sol];
            for e in group {
                if let Element::Optional(inner) = e {
                    extended = extended
                        .into_iter()
                        .flat_map(|s| {
                            let more = self.solve(inner, &s);
                            if more.is_empty() {
                                vec![s]
                            } else {
                                more
                            }
                        })
                        .collect();
                }
            }
            results.extend(extended);
        }
        results.retain(|s| {
            group.iter().all(|e| match e {
                Element::Filter(f) => ebv(f, s) == Some(true),
                _ => true,
            })
        });
        results
    }

    fn enumerate(
        &self,
        group: &[Element],
        vars: &[String],
        i: usize,
        current: &mut Assignment,
        out: &mut Vec<Assignment>,
    ) {
        if !self.consistent(group, current) {
            return;
        }
        if i == vars.len() {
            out.push(current.clone());
            return;
        }
        for value in &self.domain {
            current.insert(vars[i].clone(), value.clone());
            self.enumerate(group, vars, i + 1, current, out);
            current.remove(&vars[i]);
        }
    }

    /// Checks every required pattern whose variables are all assigned.
    fn consistent(&self, group: &[Element], a: &Assignment) -> bool {
        group.iter().all(|e| match e {
            Element::Triple(tp) => {
                let (Some(s), Some(p), Some(o)) =
                    (value(&tp.subject, a), value(&tp.predicate, a), value(&tp.object, a))
                else {
                    return true;
                };
                if s.is_literal() || !p.is_iri() {
                    return false;
                }
                self.triples.contains(&Triple { subject: s, predicate: p, object: o })
            }
            Element::Bind { value: v, var } => match (value(v, a), a.get(var)) {
                (Some(x), Some(y)) => x == *y,
                _ => true,
            },
            _ => true,
        })
    }

    pub fn run(graph: &Graph, plan: &QueryPlan) -> Vec<Vec<Option<Term>>> {
        let oracle = Oracle::new(graph, plan);
        let mut sols = oracle.solve(&plan.patterns, &Assignment::new());

        let grouped =
            plan.group_by.is_some() || plan.projections.iter().any(|p| matches!(p, Projection::GroupConcat(_)));
        if grouped {
            let keys = plan.group_by.clone().unwrap_or_default();
            let mut groups: BTreeMap<Vec<Option<Term>>, Vec<Assignment>> = BTreeMap::new();
            for s in sols {
                let k = keys.iter().map(|v| s.get(v).cloned()).collect();
                groups.entry(k).or_default().push(s);
            }
            sols = groups
                .into_iter()
                .map(|(k, members)| {
                    let mut row = Assignment::new();
                    for (v, t) in keys.iter().zip(k) {
                        if let Some(t) = t {
                            row.insert(v.clone(), t);
                        }
                    }
                    for p in &plan.projections {
                        if let Projection::GroupConcat(g) = p {
                            let mut vals: Vec<String> =
                                members.iter().filter_map(|m| m.get(&g.var)).map(|t| t.value().to_string()).collect();
                            if g.distinct {
                                let set: BTreeSet<String> = vals.into_iter().collect();
                                vals = set.into_iter().collect();
                            }
                            row.insert(g.alias.clone(), Term::literal(vals.join(&g.separator)));
                        }
                    }
                    row
                })
                .collect();
        }

        if !plan.order_by.is_empty() {
            sols.sort_by(|a, b| {
                for k in &plan.order_by {
                    let o = order_cells(a.get(&k.var), b.get(&k.var), k.ascending);
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            });
        }

        let mut rows: Vec<Vec<Option<Term>>> =
            sols.iter().map(|s| plan.projections.iter().map(|p| s.get(p.name()).cloned()).collect()).collect();
        if plan.distinct {
            let mut seen = HashSet::new();
            rows.retain(|r| seen.insert(r.clone()));
        }
        rows
    }
}

fn value(tp: &TermPattern, a: &Assignment) -> Option<Term> {
    match tp {
        TermPattern::Var(v) => a.get(v).cloned(),
        TermPattern::Const(t) => Some(t.clone()),
        TermPattern::Slot(s) => panic!("open slot {s}"),
    }
}

fn ebv(e: &Expr, a: &Assignment) -> Option<bool> {
    match e {
        Expr::Eq(x, y) => Some(operand(x, a)? == operand(y, a)?),
        Expr::NotEq(x, y) => Some(operand(x, a)? != operand(y, a)?),
        Expr::And(x, y) => match (ebv(x, a), ebv(y, a)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
        Expr::Term(_) => {
            let t = operand(e, a)?;
            let lit = t.as_literal()?;
            if lit.datatype.as_deref() != Some("http://www.w3.org/2001/XMLSchema#boolean") {
                return None;
            }
            match lit.value.as_str() {
                "true" | "1" => Some(true),
                "false" | "0" => Some(false),
                _ => None,
            }
        }
    }
}

fn operand(e: &Expr, a: &Assignment) -> Option<Term> {
    match e {
        Expr::Term(tp) => value(tp, a),
        _ => None,
    }
}

fn collect_consts(group: &[Element], out: &mut BTreeSet<Term>) {
    for e in group {
        match e {
            Element::Bind { value: TermPattern::Const(t), .. } => {
                out.insert(t.clone());
            }
            Element::Optional(inner) => collect_consts(inner, out),
            _ => {}
        }
    }
}

pub fn order_cells(a: Option<&Term>, b: Option<&Term>, ascending: bool) -> Ordering {
    let num = |t: &Term| -> Option<f64> {
        let lit = t.as_literal()?;
        let dt = lit.datatype.as_deref()?;
        if dt.ends_with("#integer") || dt.ends_with("#decimal") || dt.ends_with("#double") || dt.ends_with("#int") {
            lit.value.parse().ok()
        } else {
            None
        }
    };
    let rank = |t: &Term| match t {
        Term::Blank { .. } => 0,
        Term::Iri { .. } => 1,
        Term::Literal(_) => 2,
    };
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, _) => Ordering::Greater,
        (_, None) => Ordering::Less,
        (Some(x), Some(y)) => {
            let o = match (num(x), num(y)) {
                (Some(p), Some(q)) => p.partial_cmp(&q).unwrap(),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => rank(x).cmp(&rank(y)).then(x.value().cmp(y.value())),
            };
            if ascending {
                o
            } else {
                o.reverse()
            }
        }
    }
}

/// Rows as a sorted multiset.
pub fn multiset(rows: &[Vec<Option<Term>>]) -> Vec<Vec<Option<Term>>> {
    let mut v = rows.to_vec();
    v.sort();
    v
}
