//! Knowledge-graph-grounded storytelling: plan competency-question beats,
//! retrieve evidence from an RDF graph, generate evidence-closed text and
//! score it.

pub mod cq;
pub mod eval;
pub mod generate;
pub mod harness;
pub mod kg;
pub mod planner;
pub mod query;
pub mod retrieve;
pub mod rng;
pub mod text;
pub mod validate;

mod error;

pub use error::Error;

/// Pretty JSON with object keys sorted, newline-terminated. Equal values give
/// equal bytes.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable value");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON value");
    text.push('\n');
    text
}
