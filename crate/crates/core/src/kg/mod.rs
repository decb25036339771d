//! In-memory RDF store: terms, an indexed immutable graph and a Turtle
//! reader/writer.

mod graph;
mod term;
mod turtle;
pub mod vocab;

pub use graph::{Graph, GraphBuilder, GraphProfile, TermId};
pub use term::{local_name, Literal, Term, Triple};
pub use turtle::{parse_turtle, write_turtle, TurtleError};

use std::path::Path;

/// Reads and parses a Turtle file.
pub fn load_turtle(path: &Path) -> Result<Graph, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_turtle(&text).map_err(|source| crate::Error::Turtle { path: path.to_path_buf(), source })
}
