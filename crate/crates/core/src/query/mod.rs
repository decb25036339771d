//! SPARQL subset used by the competency-question templates.
//!
//! Supported: `PREFIX`, `SELECT [DISTINCT]`, basic graph patterns with `;`
//! and `,` abbreviations, `BIND`, `FILTER` with `=`, `!=` and `&&`, nested
//! `OPTIONAL`, `GROUP BY`, `GROUP_CONCAT([DISTINCT] ?v; separator="...")`
//! and `ORDER BY` with `ASC`/`DESC`. Anything else is rejected with
//! [`QueryError::UnsupportedFeature`]. Templates may contain `{name}`
//! placeholders wherever an IRI is allowed.

mod exec;
mod lexer;
mod parser;
mod plan;

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Term, Triple};

pub use exec::{compare_cells, execute};
pub use parser::parse_query;
pub use plan::{Element, Expr, GroupConcat, OrderKey, Projection, QueryPlan, TermPattern, TriplePattern};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unsupported query feature: {0}")]
    UnsupportedFeature(String),
    #[error("no binding for slot '{0}'")]
    MissingBinding(String),
    #[error("binding for unknown slot '{0}'")]
    UnknownSlot(String),
    #[error("slot '{0}' is still open; bind parameters before executing")]
    UnboundSlot(String),
}

/// Query answer: ordered columns and rows with explicit nulls for unbound
/// cells. `witnesses[i]` holds the graph triples that produced `rows[i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Term>>>,
    pub witnesses: Vec<Vec<Triple>>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell by row index and column name.
    pub fn get(&self, row: usize, column: &str) -> Option<&Term> {
        self.rows.get(row)?.get(self.column(column)?)?.as_ref()
    }

    /// Row as a column→cell map.
    pub fn row_map(&self, row: usize) -> BTreeMap<&str, Option<&Term>> {
        self.columns.iter().map(String::as_str).zip(self.rows[row].iter().map(Option::as_ref)).collect()
    }

    /// Applies DISTINCT to an existing table (first occurrence wins).
    pub fn distinct(&self) -> ResultTable {
        let mut out = ResultTable { columns: self.columns.clone(), ..Default::default() };
        let mut seen = std::collections::HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if seen.insert(row.clone()) {
                out.rows.push(row.clone());
                out.witnesses.push(self.witnesses.get(i).cloned().unwrap_or_default());
            }
        }
        out
    }
}

struct RowRef<'a>(&'a [String], &'a [Option<Term>]);

impl Serialize for RowRef<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (c, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(c, v)?;
        }
        map.end()
    }
}

impl Serialize for ResultTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<RowRef<'_>> = self.rows.iter().map(|r| RowRef(&self.columns, r)).collect();
        let mut st = s.serialize_struct("ResultTable", 2)?;
        st.serialize_field("columns", &self.columns)?;
        st.serialize_field("rows", &rows)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ResultTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            columns: Vec<String>,
            rows: Vec<BTreeMap<String, Option<Term>>>,
        }
        let raw = Raw::deserialize(d)?;
        let mut rows = Vec::with_capacity(raw.rows.len());
        for mut r in raw.rows {
            if r.len() != raw.columns.len() {
                return Err(serde::de::Error::custom("row keys differ from columns"));
            }
            let mut row = Vec::with_capacity(raw.columns.len());
            for c in &raw.columns {
                match r.remove(c) {
                    Some(v) => row.push(v),
                    None => return Err(serde::de::Error::custom(format!("row lacks column '{c}'"))),
                }
            }
            rows.push(row);
        }
        let witnesses = vec![Vec::new(); rows.len()];
        Ok(ResultTable { columns: raw.columns, rows, witnesses })
    }
}
