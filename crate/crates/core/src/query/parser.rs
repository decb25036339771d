use std::collections::{BTreeMap, BTreeSet};

use crate::kg::{vocab, Term};

use super::lexer::{tokenize, Tok, Token};
use super::plan::{Element, Expr, GroupConcat, OrderKey, Projection, QueryPlan, TermPattern, TriplePattern};
use super::QueryError;

/// Parses query text in the supported SPARQL subset.
pub fn parse_query(text: &str) -> Result<QueryPlan, QueryError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, i: 0, prefixes: BTreeMap::new() };
    let plan = p.query()?;
    validate(&plan)?;
    Ok(plan)
}

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    prefixes: BTreeMap<String, String>,
}

type PResult<T> = Result<T, QueryError>;

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "UNION",
    "MINUS",
    "VALUES",
    "GRAPH",
    "SERVICE",
    "HAVING",
    "LIMIT",
    "OFFSET",
    "REDUCED",
    "CONSTRUCT",
    "ASK",
    "DESCRIBE",
    "FROM",
    "EXISTS",
    "NOT",
    "BASE",
];

const UNSUPPORTED_AGGREGATES: &[&str] = &["COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].tok
    }

    fn pos(&self) -> usize {
        self.tokens[self.i].pos
    }

    fn next(&mut self) -> Tok {
        let t = self.tokens[self.i].tok.clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(QueryError::Syntax { position: self.pos(), message: message.into() })
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.err(format!("expected {kw}, found {}", describe(self.peek())))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}', found {}", describe(self.peek())))
        }
    }

    fn check_unsupported(&self) -> PResult<()> {
        if let Tok::Ident(w) = self.peek() {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED_KEYWORDS.contains(&upper.as_str()) {
                return Err(QueryError::UnsupportedFeature(upper));
            }
        }
        Ok(())
    }

    fn query(&mut self) -> PResult<QueryPlan> {
        loop {
            self.check_unsupported()?;
            if !self.eat_keyword("PREFIX") {
                break;
            }
            let Tok::PName(prefix, local) = self.next() else {
                return self.err("expected prefix name after PREFIX");
            };
            if !local.is_empty() {
                return self.err("prefix declaration must end with ':'");
            }
            let Tok::Iri(iri) = self.next() else {
                return self.err("expected IRI in PREFIX declaration");
            };
            self.prefixes.insert(prefix, iri);
        }
        self.check_unsupported()?;
        self.expect_keyword("SELECT")?;
        self.check_unsupported()?;
        let distinct = self.eat_keyword("DISTINCT");
        let projections = self.projections()?;
        self.eat_keyword("WHERE");
        self.expect_sym("{")?;
        let mut scope = BTreeSet::new();
        let patterns = self.group(&mut scope)?;
        let mut group_by = None;
        let mut order_by = Vec::new();
        loop {
            self.check_unsupported()?;
            if self.eat_keyword("GROUP") {
                self.expect_keyword("BY")?;
                let mut vars = Vec::new();
                while let Tok::Var(v) = self.peek().clone() {
                    self.next();
                    vars.push(v);
                }
                if vars.is_empty() {
                    return self.err("GROUP BY needs at least one variable");
                }
                group_by = Some(vars);
            } else if self.eat_keyword("ORDER") {
                self.expect_keyword("BY")?;
                loop {
                    match self.peek().clone() {
                        Tok::Var(v) => {
                            self.next();
                            order_by.push(OrderKey { var: v, ascending: true });
                        }
                        Tok::Ident(w) if w.eq_ignore_ascii_case("ASC") || w.eq_ignore_ascii_case("DESC") => {
                            self.next();
                            self.expect_sym("(")?;
                            let Tok::Var(v) = self.next() else {
                                return self.err("ORDER BY supports variables only");
                            };
                            self.expect_sym(")")?;
                            order_by.push(OrderKey { var: v, ascending: w.eq_ignore_ascii_case("ASC") });
                        }
                        _ => break,
                    }
                }
                if order_by.is_empty() {
                    return self.err("ORDER BY needs at least one key");
                }
            } else {
                break;
            }
        }
        if *self.peek() != Tok::Eof {
            return self.err(format!("unexpected {} after query", describe(self.peek())));
        }
        Ok(QueryPlan { prefixes: self.prefixes.clone(), distinct, projections, patterns, group_by, order_by })
    }

    fn projections(&mut self) -> PResult<Vec<Projection>> {
        let mut out = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Var(v) => {
                    self.next();
                    out.push(Projection::Var(v));
                }
                Tok::Sym("(") => {
                    self.next();
                    out.push(Projection::GroupConcat(self.aggregate()?));
                }
                Tok::Sym("*") => return Err(QueryError::UnsupportedFeature("SELECT *".into())),
                _ => break,
            }
        }
        if out.is_empty() {
            return self.err("SELECT needs at least one variable");
        }
        Ok(out)
    }

    fn aggregate(&mut self) -> PResult<GroupConcat> {
        let name = match self.peek() {
            Tok::Ident(w) => w.to_ascii_uppercase(),
            _ => return self.err("expected aggregate"),
        };
        if UNSUPPORTED_AGGREGATES.contains(&name.as_str()) {
            return Err(QueryError::UnsupportedFeature(name));
        }
        if name != "GROUP_CONCAT" {
            return Err(QueryError::UnsupportedFeature(format!("expression {name} in SELECT")));
        }
        self.next();
        self.expect_sym("(")?;
        let distinct = self.eat_keyword("DISTINCT");
        let Tok::Var(var) = self.next() else {
            return self.err("GROUP_CONCAT takes a variable");
        };
        let mut separator = " ".to_string();
        if self.eat_sym(";") {
            self.expect_keyword("separator")?;
            self.expect_sym("=")?;
            let Tok::Str(s) = self.next() else {
                return self.err("separator must be a string");
            };
            separator = s;
        }
        self.expect_sym(")")?;
        self.expect_keyword("AS")?;
        let Tok::Var(alias) = self.next() else {
            return self.err("expected variable after AS");
        };
        self.expect_sym(")")?;
        Ok(GroupConcat { var, distinct, separator, alias })
    }

    /// Parses group contents up to and including the closing '}'.
    fn group(&mut self, scope: &mut BTreeSet<String>) -> PResult<Vec<Element>> {
        let mut out = Vec::new();
        loop {
            self.check_unsupported()?;
            match self.peek().clone() {
                Tok::Sym("}") => {
                    self.next();
                    return Ok(out);
                }
                Tok::Sym(".") => {
                    self.next();
                }
                Tok::Sym("{") => return Err(QueryError::UnsupportedFeature("nested group".into())),
                Tok::Ident(w) if w.eq_ignore_ascii_case("SELECT") => {
                    return Err(QueryError::UnsupportedFeature("subquery".into()));
                }
                Tok::Ident(w) if w.eq_ignore_ascii_case("BIND") => {
                    self.next();
                    self.expect_sym("(")?;
                    let value = self.operand()?;
                    self.expect_keyword("AS")?;
                    let pos = self.pos();
                    let Tok::Var(var) = self.next() else {
                        return self.err("expected variable after AS");
                    };
                    if scope.contains(&var) {
                        return Err(QueryError::Syntax {
                            position: pos,
                            message: format!("BIND target ?{var} already in scope"),
                        });
                    }
                    self.expect_sym(")")?;
                    if let TermPattern::Var(v) = &value {
                        scope.insert(v.clone());
                    }
                    scope.insert(var.clone());
                    out.push(Element::Bind { value, var });
                }
                Tok::Ident(w) if w.eq_ignore_ascii_case("FILTER") => {
                    self.next();
                    if !self.is_sym("(") {
                        return match self.peek() {
                            Tok::Ident(f) => Err(QueryError::UnsupportedFeature(format!("function {f}"))),
                            _ => self.err("expected '(' after FILTER"),
                        };
                    }
                    self.next();
                    let expr = self.expr()?;
                    self.expect_sym(")")?;
                    out.push(Element::Filter(expr));
                }
                Tok::Ident(w) if w.eq_ignore_ascii_case("OPTIONAL") => {
                    self.next();
                    self.expect_sym("{")?;
                    let inner = self.group(scope)?;
                    out.push(Element::Optional(inner));
                }
                Tok::Eof => return self.err("unexpected end of query, expected '}'"),
                _ => self.triples(scope, &mut out)?,
            }
        }
    }

    fn triples(&mut self, scope: &mut BTreeSet<String>, out: &mut Vec<Element>) -> PResult<()> {
        let subject = self.node()?;
        loop {
            if self.is_sym("^") {
                return Err(QueryError::UnsupportedFeature("property path".into()));
            }
            let predicate = if self.is_keyword("a") {
                self.next();
                TermPattern::Const(Term::iri(vocab::RDF_TYPE))
            } else {
                self.node()?
            };
            if ["/", "|", "*", "+", "^"].iter().any(|s| self.is_sym(s)) {
                return Err(QueryError::UnsupportedFeature("property path".into()));
            }
            loop {
                let object = self.node()?;
                for tp in [&subject, &predicate, &object] {
                    if let TermPattern::Var(v) = tp {
                        scope.insert(v.clone());
                    }
                }
                out.push(Element::Triple(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                }));
                if !self.eat_sym(",") {
                    break;
                }
            }
            if !self.eat_sym(";") {
                break;
            }
            while self.eat_sym(";") {}
            if self.is_sym(".") || self.is_sym("}") {
                break;
            }
        }
        if self.eat_sym(".") || self.is_sym("}") {
            return Ok(());
        }
        if ["FILTER", "OPTIONAL", "BIND"].iter().any(|k| self.is_keyword(k)) {
            return Ok(());
        }
        self.check_unsupported()?;
        self.err(format!("expected '.', found {}", describe(self.peek())))
    }

    fn node(&mut self) -> PResult<TermPattern> {
        match self.peek() {
            Tok::Sym("[") => Err(QueryError::UnsupportedFeature("blank node".into())),
            Tok::Sym("(") => Err(QueryError::UnsupportedFeature("collection".into())),
            _ => self.operand(),
        }
    }

    fn operand(&mut self) -> PResult<TermPattern> {
        let pos = self.pos();
        match self.next() {
            Tok::Var(v) => Ok(TermPattern::Var(v)),
            Tok::Slot(s) => Ok(TermPattern::Slot(s)),
            Tok::Iri(iri) => Ok(TermPattern::Const(Term::iri(iri))),
            Tok::PName(p, l) => self.expand(&p, &l, pos).map(|iri| TermPattern::Const(Term::iri(iri))),
            Tok::Number(n) => Ok(TermPattern::Const(number(&n))),
            Tok::Sym(s @ ("-" | "+")) => match self.next() {
                Tok::Number(n) => {
                    let text = if s == "-" { format!("-{n}") } else { format!("+{n}") };
                    Ok(TermPattern::Const(number(&text)))
                }
                _ => Err(QueryError::Syntax { position: pos, message: "expected number after sign".into() }),
            },
            Tok::Str(s) => match self.peek().clone() {
                Tok::LangTag(tag) => {
                    self.next();
                    Ok(TermPattern::Const(Term::lang(s, tag)))
                }
                Tok::Sym("^^") => {
                    self.next();
                    let dpos = self.pos();
                    let dt = match self.next() {
                        Tok::Iri(iri) => iri,
                        Tok::PName(p, l) => self.expand(&p, &l, dpos)?,
                        _ => {
                            return Err(QueryError::Syntax { position: dpos, message: "expected datatype IRI".into() })
                        }
                    };
                    Ok(TermPattern::Const(Term::typed(s, dt)))
                }
                _ => Ok(TermPattern::Const(Term::literal(s))),
            },
            Tok::Ident(w) if w == "true" || w == "false" => Ok(TermPattern::Const(Term::boolean(w == "true"))),
            Tok::Ident(w) if self.is_sym("(") => Err(QueryError::UnsupportedFeature(format!("function {w}"))),
            other => Err(QueryError::Syntax { position: pos, message: format!("unexpected {}", describe(&other)) }),
        }
    }

    fn expand(&self, prefix: &str, local: &str, pos: usize) -> PResult<String> {
        match self.prefixes.get(prefix) {
            Some(base) => Ok(format!("{base}{local}")),
            None => Err(QueryError::Syntax { position: pos, message: format!("undeclared prefix '{prefix}:'") }),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut left = self.relational()?;
        loop {
            if self.eat_sym("&&") {
                let right = self.relational()?;
                left = Expr::And(Box::new(left), Box::new(right));
            } else if self.is_sym("||") {
                return Err(QueryError::UnsupportedFeature("||".into()));
            } else {
                return Ok(left);
            }
        }
    }

    fn relational(&mut self) -> PResult<Expr> {
        let left = self.primary()?;
        if self.eat_sym("=") {
            Ok(Expr::Eq(Box::new(left), Box::new(self.primary()?)))
        } else if self.eat_sym("!=") {
            Ok(Expr::NotEq(Box::new(left), Box::new(self.primary()?)))
        } else {
            for op in ["<", ">", "<=", ">="] {
                if self.is_sym(op) {
                    return Err(QueryError::UnsupportedFeature(format!("operator {op}")));
                }
            }
            Ok(left)
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.is_sym("!") {
            return Err(QueryError::UnsupportedFeature("operator !".into()));
        }
        self.operand().map(Expr::Term)
    }
}

fn number(text: &str) -> Term {
    let dt = if text.contains(['e', 'E']) {
        vocab::XSD_DOUBLE
    } else if text.contains('.') {
        vocab::XSD_DECIMAL
    } else {
        vocab::XSD_INTEGER
    };
    Term::typed(text, dt)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Var(v) => format!("?{v}"),
        Tok::Iri(i) => format!("<{i}>"),
        Tok::PName(p, l) => format!("{p}:{l}"),
        Tok::Slot(s) => format!("{{{s}}}"),
        Tok::Str(s) => format!("\"{s}\""),
        Tok::LangTag(t) => format!("@{t}"),
        Tok::Number(n) => n.clone(),
        Tok::Ident(w) => w.clone(),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Eof => "end of query".into(),
    }
}

fn validate(plan: &QueryPlan) -> PResult<()> {
    let vars = plan.pattern_vars();
    let mut seen = BTreeSet::new();
    for proj in &plan.projections {
        if !seen.insert(proj.name().to_string()) {
            return Err(QueryError::Syntax {
                position: 0,
                message: format!("duplicate output column ?{}", proj.name()),
            });
        }
        match proj {
            Projection::Var(v) if !vars.contains(v) => {
                return Err(QueryError::Syntax {
                    position: 0,
                    message: format!("selected ?{v} does not occur in the query"),
                });
            }
            Projection::GroupConcat(g) => {
                if !vars.contains(&g.var) {
                    return Err(QueryError::Syntax {
                        position: 0,
                        message: format!("aggregated ?{} does not occur in the query", g.var),
                    });
                }
                if vars.contains(&g.alias) {
                    return Err(QueryError::Syntax {
                        position: 0,
                        message: format!("alias ?{} already used in the query", g.alias),
                    });
                }
            }
            _ => {}
        }
    }
    if plan.is_grouped() {
        let keys: BTreeSet<&String> = plan.group_by.iter().flatten().collect();
        for proj in &plan.projections {
            if let Projection::Var(v) = proj {
                if !keys.contains(v) {
                    return Err(QueryError::Syntax {
                        position: 0,
                        message: format!("?{v} is selected but neither grouped nor aggregated"),
                    });
                }
            }
        }
    }
    Ok(())
}
