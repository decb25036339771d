//! Turtle reader and writer.
//!
//! Covers the subset the published knowledge graph dumps use: `@prefix` /
//! `PREFIX`, `@base` / `BASE`, prefixed names, absolute and relative IRIs,
//! the `a` keyword, short and long string literals with language tags or
//! datatypes, numeric and boolean shorthand, predicate lists (`;`), object
//! lists (`,`), labelled blank nodes, blank-node property lists (`[...]`)
//! and comments. RDF collections (`(...)`) are rejected with
//! [`TurtleError::UnsupportedSyntax`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::graph::{Graph, GraphBuilder};
use super::term::{escape_string, Term, Triple};
use super::vocab;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TurtleError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown prefix '{prefix}:' at {line}:{column}")]
    UnknownPrefix { prefix: String, line: usize, column: usize },
    #[error("unsupported syntax at {line}:{column}: {feature}")]
    UnsupportedSyntax { feature: String, line: usize, column: usize },
}

impl TurtleError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            TurtleError::Syntax { line, column, .. }
            | TurtleError::UnknownPrefix { line, column, .. }
            | TurtleError::UnsupportedSyntax { line, column, .. } => (*line, *column),
        }
    }
}

/// Parses a Turtle document into a [`Graph`].
pub fn parse_turtle(document: &str) -> Result<Graph, TurtleError> {
    let mut parser = Parser::new(document);
    parser.document()?;
    Ok(parser.builder.build())
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<url::Url>,
    builder: GraphBuilder,
    next_bnode: usize,
}

type PResult<T> = Result<T, TurtleError>;

impl Parser {
    fn new(document: &str) -> Self {
        Self {
            chars: document.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            prefixes: BTreeMap::new(),
            base: None,
            builder: GraphBuilder::new(),
            next_bnode: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(TurtleError::Syntax { line: self.line, column: self.col, message: message.into() })
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c))
    }

    fn starts_with_keyword_ci(&self, kw: &str) -> bool {
        let matches = kw.chars().enumerate().all(|(i, c)| self.peek_at(i).is_some_and(|x| x.eq_ignore_ascii_case(&c)));
        matches && !self.peek_at(kw.len()).is_some_and(is_name_char)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("'{f}'"));
            self.err(format!("expected '{c}', found {found}"))
        }
    }

    fn document(&mut self) -> PResult<()> {
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                return Ok(());
            }
            self.statement()?;
        }
    }

    fn statement(&mut self) -> PResult<()> {
        if self.starts_with("@prefix") {
            self.advance(7);
            self.prefix_decl()?;
            return self.expect('.');
        }
        if self.starts_with("@base") {
            self.advance(5);
            self.base_decl()?;
            return self.expect('.');
        }
        if self.starts_with_keyword_ci("PREFIX") {
            self.advance(6);
            return self.prefix_decl();
        }
        if self.starts_with_keyword_ci("BASE") {
            self.advance(4);
            return self.base_decl();
        }
        self.triples()?;
        self.expect('.')
    }

    fn advance(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn prefix_decl(&mut self) -> PResult<()> {
        self.skip_ws();
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if !is_name_char(c) && c != '.' {
                return self.err(format!("invalid character '{c}' in prefix"));
            }
            prefix.push(c);
            self.bump();
        }
        if self.peek() != Some(':') {
            return self.err("expected ':' after prefix name");
        }
        self.bump();
        self.skip_ws();
        let iri = self.iri_ref()?;
        self.builder.add_prefix(prefix.clone(), iri.clone());
        self.prefixes.insert(prefix, iri);
        Ok(())
    }

    fn base_decl(&mut self) -> PResult<()> {
        self.skip_ws();
        let iri = self.iri_ref()?;
        match url::Url::parse(&iri) {
            Ok(u) => {
                self.base = Some(u);
                Ok(())
            }
            Err(e) => self.err(format!("invalid base IRI <{iri}>: {e}")),
        }
    }

    fn triples(&mut self) -> PResult<()> {
        self.skip_ws();
        if self.peek() == Some('[') {
            let subject = self.blank_node_property_list()?;
            self.skip_ws();
            if self.peek() == Some('.') {
                return Ok(());
            }
            return self.predicate_object_list(&subject);
        }
        let subject = self.subject()?;
        self.predicate_object_list(&subject)
    }

    fn subject(&mut self) -> PResult<Term> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iri_ref()?)),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label(),
            Some('(') => self.unsupported("RDF collection"),
            Some('"') | Some('\'') => self.err("literal cannot be a subject"),
            Some(c) if is_name_start(c) || c == ':' => {
                let (line, col) = (self.line, self.col);
                let name = self.name_token();
                if name.contains(':') {
                    self.expand_pname(&name, line, col).map(Term::iri)
                } else {
                    Err(TurtleError::Syntax {
                        line,
                        column: col,
                        message: format!("unexpected '{name}' in subject position"),
                    })
                }
            }
            Some(c) => self.err(format!("unexpected '{c}' in subject position")),
            None => self.err("unexpected end of input"),
        }
    }

    fn unsupported<T>(&self, feature: &str) -> PResult<T> {
        Err(TurtleError::UnsupportedSyntax { feature: feature.to_string(), line: self.line, column: self.col })
    }

    fn predicate_object_list(&mut self, subject: &Term) -> PResult<()> {
        loop {
            let predicate = self.verb()?;
            self.object_list(subject, &predicate)?;
            self.skip_ws();
            if self.peek() != Some(';') {
                return Ok(());
            }
            while self.peek() == Some(';') {
                self.bump();
                self.skip_ws();
            }
            if matches!(self.peek(), Some('.') | Some(']') | None) {
                return Ok(());
            }
        }
    }

    fn verb(&mut self) -> PResult<Term> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iri_ref()?)),
            Some('a') if !self.peek_at(1).is_some_and(|c| is_name_char(c) || c == ':') => {
                self.bump();
                Ok(Term::iri(vocab::RDF_TYPE))
            }
            Some(c) if is_name_start(c) || c == ':' => {
                let (line, col) = (self.line, self.col);
                let name = self.name_token();
                if name.contains(':') {
                    self.expand_pname(&name, line, col).map(Term::iri)
                } else {
                    Err(TurtleError::Syntax {
                        line,
                        column: col,
                        message: format!("expected predicate, found '{name}'"),
                    })
                }
            }
            Some(c) => self.err(format!("expected predicate, found '{c}'")),
            None => self.err("unexpected end of input, expected predicate"),
        }
    }

    fn object_list(&mut self, subject: &Term, predicate: &Term) -> PResult<()> {
        loop {
            let object = self.object()?;
            self.builder.insert(Triple::new(subject.clone(), predicate.clone(), object));
            self.skip_ws();
            if self.peek() == Some(',') {
                self.bump();
            } else {
                return Ok(());
            }
        }
    }

    fn object(&mut self) -> PResult<Term> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iri_ref()?)),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label(),
            Some('[') => self.blank_node_property_list(),
            Some('(') => self.unsupported("RDF collection"),
            Some('"') | Some('\'') => self.rdf_literal(),
            Some(c)
                if c.is_ascii_digit()
                    || c == '+'
                    || c == '-'
                    || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                self.numeric_literal()
            }
            Some(c) if is_name_start(c) || c == ':' => {
                let (line, col) = (self.line, self.col);
                let name = self.name_token();
                match name.as_str() {
                    "true" => Ok(Term::boolean(true)),
                    "false" => Ok(Term::boolean(false)),
                    n if n.contains(':') => self.expand_pname(n, line, col).map(Term::iri),
                    n => Err(TurtleError::Syntax {
                        line,
                        column: col,
                        message: format!("unexpected '{n}' in object position"),
                    }),
                }
            }
            Some(c) => self.err(format!("unexpected '{c}' in object position")),
            None => self.err("unexpected end of input, expected object"),
        }
    }

    fn fresh_bnode(&mut self) -> Term {
        self.next_bnode += 1;
        Term::blank(format!("genid{}", self.next_bnode))
    }

    fn blank_node_property_list(&mut self) -> PResult<Term> {
        self.expect('[')?;
        let node = self.fresh_bnode();
        self.skip_ws();
        if self.peek() != Some(']') {
            self.predicate_object_list(&node)?;
        }
        self.expect(']')?;
        Ok(node)
    }

    fn blank_label(&mut self) -> PResult<Term> {
        self.advance(2);
        let mut label = String::new();
        while let Some(c) = self.peek() {
            if is_name_char(c) || c == '.' {
                label.push(c);
                self.bump();
            } else {
                break;
            }
        }
        self.give_back_trailing_dots(&mut label);
        if label.is_empty() {
            return self.err("empty blank node label");
        }
        Ok(Term::blank(label))
    }

    fn give_back_trailing_dots(&mut self, token: &mut String) {
        while token.ends_with('.') {
            token.pop();
            self.pos -= 1;
            self.col -= 1;
        }
    }

    /// Reads a prefixed name or bare keyword. Handles `%XX` and `\` escapes
    /// in the local part and never swallows a trailing '.'.
    fn name_token(&mut self) -> String {
        let mut token = String::new();
        while let Some(c) = self.peek() {
            if is_name_char(c) || c == ':' || c == '.' || c == '%' {
                token.push(c);
                self.bump();
            } else if c == '\\' && token.contains(':') {
                self.bump();
                if let Some(e) = self.bump() {
                    token.push(e);
                }
            } else {
                break;
            }
        }
        self.give_back_trailing_dots(&mut token);
        token
    }

    fn expand_pname(&self, name: &str, line: usize, column: usize) -> PResult<String> {
        let (prefix, local) = name.split_once(':').expect("caller checked ':'");
        match self.prefixes.get(prefix) {
            Some(base) => Ok(format!("{base}{local}")),
            None => Err(TurtleError::UnknownPrefix { prefix: prefix.to_string(), line, column }),
        }
    }

    fn iri_ref(&mut self) -> PResult<String> {
        let (line, col) = (self.line, self.col);
        if self.peek() != Some('<') {
            return self.err("expected '<'");
        }
        self.bump();
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => iri.push(self.hex_escape(4)?),
                    Some('U') => iri.push(self.hex_escape(8)?),
                    _ => return self.err("invalid escape in IRI"),
                },
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    return Err(TurtleError::Syntax {
                        line,
                        column: col,
                        message: format!("invalid character {c:?} in IRI"),
                    });
                }
                Some(c) => iri.push(c),
                None => return Err(TurtleError::Syntax { line, column: col, message: "unterminated IRI".into() }),
            }
        }
        self.resolve(iri, line, col)
    }

    fn resolve(&self, iri: String, line: usize, column: usize) -> PResult<String> {
        if has_scheme(&iri) {
            return Ok(iri);
        }
        match &self.base {
            Some(base) => base.join(&iri).map(|u| u.to_string()).map_err(|e| TurtleError::Syntax {
                line,
                column,
                message: format!("cannot resolve <{iri}>: {e}"),
            }),
            None => Err(TurtleError::Syntax { line, column, message: format!("relative IRI <{iri}> without a base") }),
        }
    }

    fn hex_escape(&mut self, len: usize) -> PResult<char> {
        let mut code = 0u32;
        for _ in 0..len {
            let Some(d) = self.bump().and_then(|c| c.to_digit(16)) else {
                return self.err("invalid hex escape");
            };
            code = code * 16 + d;
        }
        match char::from_u32(code) {
            Some(c) => Ok(c),
            None => self.err("escape is not a valid code point"),
        }
    }

    fn rdf_literal(&mut self) -> PResult<Term> {
        let value = self.string()?;
        match self.peek() {
            Some('@') => {
                self.bump();
                let mut lang = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        lang.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if lang.is_empty() {
                    return self.err("empty language tag");
                }
                Ok(Term::lang(value, lang))
            }
            Some('^') if self.peek_at(1) == Some('^') => {
                self.advance(2);
                let datatype = match self.peek() {
                    Some('<') => self.iri_ref()?,
                    _ => {
                        let (line, col) = (self.line, self.col);
                        let name = self.name_token();
                        if !name.contains(':') {
                            return Err(TurtleError::Syntax {
                                line,
                                column: col,
                                message: "expected datatype IRI".into(),
                            });
                        }
                        self.expand_pname(&name, line, col)?
                    }
                };
                Ok(Term::typed(value, datatype))
            }
            _ => Ok(Term::literal(value)),
        }
    }

    fn string(&mut self) -> PResult<String> {
        let (line, col) = (self.line, self.col);
        let quote = self.bump().expect("caller checked quote");
        let long = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if long {
            self.advance(2);
        }
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(TurtleError::Syntax { line, column: col, message: "unterminated string".into() }),
                Some(c) if c == quote => {
                    if !long {
                        return Ok(out);
                    }
                    if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                        self.advance(2);
                        // a long string may end with up to two extra quote chars
                        while self.peek() == Some(quote) {
                            out.push(quote);
                            self.bump();
                        }
                        return Ok(out);
                    }
                    out.push(c);
                }
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return self.err("invalid string escape"),
                    };
                    out.push(c);
                }
                Some('\n') | Some('\r') if !long => {
                    return Err(TurtleError::Syntax {
                        line,
                        column: col,
                        message: "line break in short string".into(),
                    });
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn numeric_literal(&mut self) -> PResult<Term> {
        let mut text = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            text.push(c);
            self.bump();
        }
        let mut digits = 0;
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            text.push(c);
            self.bump();
            digits += 1;
        }
        let mut datatype = vocab::XSD_INTEGER;
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            text.push('.');
            self.bump();
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                text.push(c);
                self.bump();
                digits += 1;
            }
            datatype = vocab::XSD_DECIMAL;
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            text.push(e);
            self.bump();
            if let Some(c @ ('+' | '-')) = self.peek() {
                text.push(c);
                self.bump();
            }
            let mut exp_digits = 0;
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                text.push(c);
                self.bump();
                exp_digits += 1;
            }
            if exp_digits == 0 {
                return self.err("malformed exponent");
            }
            datatype = vocab::XSD_DOUBLE;
        }
        if digits == 0 {
            return self.err("malformed number");
        }
        Ok(Term::typed(text, datatype))
    }
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\u{b7}'
}

fn has_scheme(iri: &str) -> bool {
    match iri.find(':') {
        Some(pos) if pos > 0 => {
            let scheme = &iri[..pos];
            scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        _ => false,
    }
}

/// Serializes a graph as Turtle: prefix declarations, then one block per
/// subject in SPO order. Parsing the output yields the same triple set.
pub fn write_turtle(graph: &Graph) -> String {
    let prefixes: Vec<(String, String)> = graph.prefixes().iter().map(|(p, i)| (p.clone(), i.clone())).collect();
    let mut out = String::new();
    for (p, iri) in &prefixes {
        let _ = writeln!(out, "@prefix {p}: <{iri}> .");
    }
    if !prefixes.is_empty() {
        out.push('\n');
    }
    let mut current: Option<Term> = None;
    for t in graph.triples() {
        if current.as_ref() == Some(&t.subject) {
            let _ = write!(out, " ;\n    {} {}", write_term(&t.predicate, &prefixes), write_term(&t.object, &prefixes));
        } else {
            if current.is_some() {
                out.push_str(" .\n");
            }
            let _ = write!(
                out,
                "{} {} {}",
                write_term(&t.subject, &prefixes),
                write_term(&t.predicate, &prefixes),
                write_term(&t.object, &prefixes)
            );
            current = Some(t.subject.clone());
        }
    }
    if current.is_some() {
        out.push_str(" .\n");
    }
    out
}

fn write_term(term: &Term, prefixes: &[(String, String)]) -> String {
    match term {
        Term::Iri { value } => {
            for (p, base) in prefixes {
                if let Some(local) = value.strip_prefix(base.as_str()) {
                    if is_safe_local(local) {
                        return format!("{p}:{local}");
                    }
                }
            }
            format!("<{value}>")
        }
        Term::Blank { value } => format!("_:{value}"),
        Term::Literal(lit) => {
            let mut s = format!("\"{}\"", escape_string(&lit.value));
            if let Some(lang) = &lit.language {
                s.push('@');
                s.push_str(lang);
            } else if let Some(dt) = &lit.datatype {
                s.push_str("^^");
                s.push_str(&write_term(&Term::iri(dt.clone()), prefixes));
            }
            s
        }
    }
}

fn is_safe_local(local: &str) -> bool {
    !local.is_empty()
        && local.chars().next().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        && local.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
