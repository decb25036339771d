use std::fmt;

use serde::{Deserialize, Serialize};

use super::vocab;

/// An RDF term: IRI, blank node or literal.
///
/// Ordering is total (kind, then value, then datatype/language) and is used
/// wherever a canonical order of terms or triples is needed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    Iri { value: String },
    Blank { value: String },
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Self {
        Term::Iri { value: value.into() }
    }

    pub fn blank(value: impl Into<String>) -> Self {
        Term::Blank { value: value.into() }
    }

    /// A plain (xsd:string) literal.
    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal(Literal { value: value.into(), datatype: None, language: None })
    }

    pub fn typed(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        let datatype = datatype.into();
        // xsd:string is the implicit datatype of plain literals
        let datatype = (datatype != vocab::XSD_STRING).then_some(datatype);
        Term::Literal(Literal { value: value.into(), datatype, language: None })
    }

    pub fn lang(value: impl Into<String>, language: impl Into<String>) -> Self {
        Term::Literal(Literal {
            value: value.into(),
            datatype: None,
            language: Some(language.into().to_ascii_lowercase()),
        })
    }

    pub fn boolean(value: bool) -> Self {
        Term::typed(if value { "true" } else { "false" }, vocab::XSD_BOOLEAN)
    }

    pub fn integer(value: i64) -> Self {
        Term::typed(value.to_string(), vocab::XSD_INTEGER)
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri { .. })
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::Blank { .. })
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri { value } => Some(value),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            _ => None,
        }
    }

    /// IRI string, blank node label or literal lexical form.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri { value } | Term::Blank { value } => value,
            Term::Literal(lit) => &lit.value,
        }
    }

    /// Numeric value of literals typed with an XSD numeric datatype.
    pub fn numeric_value(&self) -> Option<f64> {
        let lit = self.as_literal()?;
        let dt = lit.datatype.as_deref()?;
        if vocab::is_numeric_datatype(dt) {
            lit.value.trim().parse::<f64>().ok()
        } else {
            None
        }
    }

    /// Fragment or last path segment of an IRI; the value itself otherwise.
    pub fn local_name(&self) -> &str {
        match self {
            Term::Iri { value } => local_name(value),
            other => other.value(),
        }
    }
}

/// Fragment or last path segment of an IRI string.
pub fn local_name(iri: &str) -> &str {
    let trimmed = iri.trim_end_matches(['/', '#']);
    match trimmed.rfind(['#', '/', ':']) {
        Some(pos) if pos + 1 < trimmed.len() => &trimmed[pos + 1..],
        _ => trimmed,
    }
}

impl fmt::Display for Term {
    /// N-Triples style rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri { value } => write!(f, "<{value}>"),
            Term::Blank { value } => write!(f, "_:{value}"),
            Term::Literal(lit) => {
                write!(f, "\"{}\"", escape_string(&lit.value))?;
                if let Some(lang) = &lit.language {
                    write!(f, "@{lang}")
                } else if let Some(dt) = &lit.datatype {
                    write!(f, "^^<{dt}>")
                } else {
                    Ok(())
                }
            }
        }
    }
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// An RDF statement. The predicate is always an IRI.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        debug_assert!(predicate.is_iri(), "predicate must be an IRI");
        debug_assert!(!subject.is_literal(), "subject cannot be a literal");
        Self { subject, predicate, object }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}
