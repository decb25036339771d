use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use crate::kg::{Graph, Term, TermId};

use super::plan::{Element, Expr, QueryPlan, TermPattern};
use super::{QueryError, ResultTable};

type Witness = BTreeSet<[TermId; 3]>;

#[derive(Debug, Clone)]
struct Solution {
    vals: Vec<Option<TermId>>,
    witness: Witness,
}

enum CPos {
    Var(usize),
    Const(TermId),
}

enum CExpr {
    Term(CPos),
    Eq(Box<CExpr>, Box<CExpr>),
    NotEq(Box<CExpr>, Box<CExpr>),
    And(Box<CExpr>, Box<CExpr>),
}

enum CElement {
    Triple([CPos; 3]),
    Bind(CPos, usize),
    Filter(CExpr),
    Optional(Vec<CElement>),
}

/// Interns query constants: graph terms keep their ids, other constants get
/// ids past the end of the graph's term table and can never match a triple.
struct Consts<'g> {
    graph: &'g Graph,
    extra: Vec<Term>,
    extra_ids: HashMap<Term, TermId>,
}

impl<'g> Consts<'g> {
    fn id(&mut self, term: &Term) -> TermId {
        if let Some(id) = self.graph.term_id(term) {
            return id;
        }
        if let Some(&id) = self.extra_ids.get(term) {
            return id;
        }
        let id = (self.graph.term_count() + self.extra.len()) as TermId;
        self.extra.push(term.clone());
        self.extra_ids.insert(term.clone(), id);
        id
    }

    fn term(&self, id: TermId) -> &Term {
        let n = self.graph.term_count();
        if (id as usize) < n {
            self.graph.term(id)
        } else {
            &self.extra[id as usize - n]
        }
    }
}

struct Compiler<'a, 'g> {
    consts: &'a mut Consts<'g>,
    vars: HashMap<String, usize>,
}

impl Compiler<'_, '_> {
    fn var(&mut self, name: &str) -> usize {
        let n = self.vars.len();
        *self.vars.entry(name.to_string()).or_insert(n)
    }

    fn pos(&mut self, tp: &TermPattern) -> Result<CPos, QueryError> {
        Ok(match tp {
            TermPattern::Var(v) => CPos::Var(self.var(v)),
            TermPattern::Const(t) => CPos::Const(self.consts.id(t)),
            TermPattern::Slot(s) => return Err(QueryError::UnboundSlot(s.clone())),
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<CExpr, QueryError> {
        Ok(match e {
            Expr::Term(tp) => CExpr::Term(self.pos(tp)?),
            Expr::Eq(a, b) => CExpr::Eq(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expr::NotEq(a, b) => CExpr::NotEq(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expr::And(a, b) => CExpr::And(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
        })
    }

    fn elements(&mut self, elements: &[Element]) -> Result<Vec<CElement>, QueryError> {
        elements
            .iter()
            .map(|e| {
                Ok(match e {
                    Element::Triple(tp) => {
                        CElement::Triple([self.pos(&tp.subject)?, self.pos(&tp.predicate)?, self.pos(&tp.object)?])
                    }
                    Element::Bind { value, var } => {
                        let value = self.pos(value)?;
                        CElement::Bind(value, self.var(var))
                    }
                    Element::Filter(expr) => CElement::Filter(self.expr(expr)?),
                    Element::Optional(inner) => CElement::Optional(self.elements(inner)?),
                })
            })
            .collect()
    }
}

/// Executes a fully bound plan.
///
/// Patterns are joined left to right as written; each OPTIONAL is evaluated
/// against every solution produced so far and keeps the solution unchanged
/// when it contributes nothing; FILTERs apply at the end of their group.
/// Alongside each row the table records the graph triples that produced it.
pub fn execute(plan: &QueryPlan, graph: &Graph) -> Result<ResultTable, QueryError> {
    let mut consts = Consts { graph, extra: Vec::new(), extra_ids: HashMap::new() };
    let mut compiler = Compiler { consts: &mut consts, vars: HashMap::new() };
    let elements = compiler.elements(&plan.patterns)?;
    for key in &plan.order_by {
        compiler.var(&key.var);
    }
    for g in plan.aggregates() {
        compiler.var(&g.alias);
    }
    let vars = compiler.vars;
    let width = vars.len();
    let ctx = Ctx { graph, consts: &consts };

    let start = Solution { vals: vec![None; width], witness: Witness::new() };
    let solutions = ctx.eval_group(&elements, vec![start]);
    let mut rows: Vec<Row> = solutions
        .into_iter()
        .map(|s| Row {
            vals: s.vals.into_iter().map(|c| c.map(|id| consts.term(id).clone())).collect(),
            witness: s.witness,
        })
        .collect();

    if plan.is_grouped() {
        rows = group(plan, &vars, rows);
    }

    if !plan.order_by.is_empty() {
        let keys: Vec<(usize, bool)> = plan.order_by.iter().map(|k| (vars[&k.var], k.ascending)).collect();
        rows.sort_by(|a, b| {
            keys.iter()
                .map(|&(idx, asc)| compare_cells(a.vals[idx].as_ref(), b.vals[idx].as_ref(), asc))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
    }

    let columns: Vec<String> = plan.select_vars().into_iter().map(str::to_string).collect();
    let col_idx: Vec<usize> = columns.iter().map(|c| vars[c]).collect();
    let mut out_rows: Vec<Vec<Option<Term>>> = Vec::with_capacity(rows.len());
    let mut witnesses: Vec<Witness> = Vec::with_capacity(rows.len());
    let mut seen: HashMap<Vec<Option<Term>>, usize> = HashMap::new();
    for row in rows {
        let projected: Vec<Option<Term>> = col_idx.iter().map(|&i| row.vals[i].clone()).collect();
        if plan.distinct {
            if let Some(&at) = seen.get(&projected) {
                witnesses[at].extend(row.witness);
                continue;
            }
            seen.insert(projected.clone(), out_rows.len());
        }
        out_rows.push(projected);
        witnesses.push(row.witness);
    }

    Ok(ResultTable {
        columns,
        rows: out_rows,
        witnesses: witnesses.into_iter().map(|w| w.into_iter().map(|ids| graph.decode(ids)).collect()).collect(),
    })
}

struct Row {
    vals: Vec<Option<Term>>,
    witness: Witness,
}

fn group(plan: &QueryPlan, vars: &HashMap<String, usize>, rows: Vec<Row>) -> Vec<Row> {
    let key_idx: Vec<usize> = plan.group_by.iter().flatten().map(|v| vars[v]).collect();
    let mut order: Vec<Vec<Option<Term>>> = Vec::new();
    let mut groups: HashMap<Vec<Option<Term>>, Vec<Row>> = HashMap::new();
    for row in rows {
        let key: Vec<Option<Term>> = key_idx.iter().map(|&i| row.vals[i].clone()).collect();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }
    let width = vars.len();
    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let members = &groups[&key];
        let mut vals = vec![None; width];
        for (&i, v) in key_idx.iter().zip(&key) {
            vals[i] = v.clone();
        }
        let mut witness = Witness::new();
        for m in members {
            witness.extend(m.witness.iter().copied());
        }
        for g in plan.aggregates() {
            let idx = vars[&g.var];
            let mut values: Vec<&str> = members.iter().filter_map(|m| m.vals[idx].as_ref()).map(Term::value).collect();
            if g.distinct {
                values.sort_unstable();
                values.dedup();
            }
            vals[vars[&g.alias]] = Some(Term::literal(values.join(&g.separator)));
        }
        out.push(Row { vals, witness });
    }
    out
}

struct Ctx<'a, 'g> {
    graph: &'g Graph,
    consts: &'a Consts<'g>,
}

impl Ctx<'_, '_> {
    fn eval_group(&self, elements: &[CElement], input: Vec<Solution>) -> Vec<Solution> {
        let mut current = input;
        let mut filters = Vec::new();
        for element in elements {
            if current.is_empty() {
                break;
            }
            match element {
                CElement::Triple(pattern) => {
                    current = current.into_iter().flat_map(|sol| self.match_triple(pattern, sol)).collect();
                }
                CElement::Bind(value, var) => {
                    for sol in &mut current {
                        sol.vals[*var] = self.resolve(value, sol);
                    }
                }
                CElement::Filter(expr) => filters.push(expr),
                CElement::Optional(inner) => {
                    current = current
                        .into_iter()
                        .flat_map(|sol| {
                            let extended = self.eval_group(inner, vec![sol.clone()]);
                            if extended.is_empty() {
                                vec![sol]
                            } else {
                                extended
                            }
                        })
                        .collect();
                }
            }
        }
        current.retain(|sol| {
            filters.iter().all(|f| match self.ebv(f, sol) {
                Ok(b) => b,
                Err(msg) => {
                    log::debug!("filter type error treated as false: {msg}");
                    false
                }
            })
        });
        current
    }

    fn resolve(&self, pos: &CPos, sol: &Solution) -> Option<TermId> {
        match pos {
            CPos::Var(i) => sol.vals[*i],
            CPos::Const(id) => Some(*id),
        }
    }

    fn match_triple(&self, pattern: &[CPos; 3], sol: Solution) -> Vec<Solution> {
        let bound = pattern.each_ref().map(|p| self.resolve(p, &sol));
        let mut out = Vec::new();
        'triples: for ids in self.graph.match_ids(bound[0], bound[1], bound[2]) {
            let mut next = sol.vals.clone();
            for (pos, &id) in pattern.iter().zip(ids.iter()) {
                if let CPos::Var(v) = pos {
                    match next[*v] {
                        Some(existing) if existing != id => continue 'triples,
                        _ => next[*v] = Some(id),
                    }
                }
            }
            let mut witness = sol.witness.clone();
            witness.insert(ids);
            out.push(Solution { vals: next, witness });
        }
        out
    }

    fn value(&self, expr: &CExpr, sol: &Solution) -> Result<TermId, String> {
        match expr {
            CExpr::Term(pos) => self.resolve(pos, sol).ok_or_else(|| "unbound variable".to_string()),
            _ => Err("boolean expression used as a value".to_string()),
        }
    }

    fn ebv(&self, expr: &CExpr, sol: &Solution) -> Result<bool, String> {
        match expr {
            CExpr::Eq(a, b) => Ok(self.value(a, sol)? == self.value(b, sol)?),
            CExpr::NotEq(a, b) => Ok(self.value(a, sol)? != self.value(b, sol)?),
            CExpr::And(a, b) => match (self.ebv(a, sol), self.ebv(b, sol)) {
                (Ok(false), _) | (_, Ok(false)) => Ok(false),
                (Ok(true), Ok(true)) => Ok(true),
                (Err(e), _) | (_, Err(e)) => Err(e),
            },
            CExpr::Term(_) => {
                let id = self.value(expr, sol)?;
                let term = self.consts.term(id);
                match term.as_literal() {
                    Some(lit) if lit.datatype.as_deref() == Some(crate::kg::vocab::XSD_BOOLEAN) => {
                        match lit.value.as_str() {
                            "true" | "1" => Ok(true),
                            "false" | "0" => Ok(false),
                            other => Err(format!("invalid boolean '{other}'")),
                        }
                    }
                    _ => Err(format!("{term} has no boolean value")),
                }
            }
        }
    }
}

/// Ordering for ORDER BY cells: numeric literals numerically, everything
/// else by lexical value; unbound cells last in either direction.
pub fn compare_cells(a: Option<&Term>, b: Option<&Term>, ascending: bool) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some(x), Some(y)) => {
            let ord = match (x.numeric_value(), y.numeric_value()) {
                (Some(p), Some(q)) => p.partial_cmp(&q).unwrap_or(Ordering::Equal),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => kind_rank(x).cmp(&kind_rank(y)).then_with(|| x.value().cmp(y.value())),
            };
            if ascending {
                ord
            } else {
                ord.reverse()
            }
        }
    }
}

fn kind_rank(t: &Term) -> u8 {
    match t {
        Term::Blank { .. } => 0,
        Term::Iri { .. } => 1,
        Term::Literal(_) => 2,
    }
}
