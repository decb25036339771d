//! IRIs of the vocabularies the pipeline relies on.

pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const SCHEMA: &str = "http://schema.org/";
pub const MM: &str = "https://w3id.org/polifonia/ontology/music-meta/";
pub const CORE: &str = "https://w3id.org/polifonia/ontology/core/";
pub const DCT: &str = "http://purl.org/dc/terms/";
pub const OA: &str = "http://www.w3.org/ns/oa#";
pub const SKOS: &str = "http://www.w3.org/2004/02/skos/core#";
pub const EX: &str = "http://wembrewind.live/ex#";

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_FIRST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#first";
pub const RDF_REST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#rest";
pub const RDF_NIL: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#nil";
pub const OWL_SAME_AS: &str = "http://www.w3.org/2002/07/owl#sameAs";
pub const SCHEMA_NAME: &str = "http://schema.org/name";

pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";

const NUMERIC_LOCAL: &[&str] = &[
    "integer",
    "decimal",
    "double",
    "float",
    "int",
    "long",
    "short",
    "byte",
    "nonNegativeInteger",
    "positiveInteger",
    "nonPositiveInteger",
    "negativeInteger",
    "unsignedInt",
    "unsignedLong",
    "unsignedShort",
    "unsignedByte",
];

pub fn is_numeric_datatype(iri: &str) -> bool {
    iri.strip_prefix(XSD).is_some_and(|local| NUMERIC_LOCAL.contains(&local))
}

/// Prefixes conventionally available to queries and CLI arguments.
pub fn well_known_prefixes() -> Vec<(&'static str, &'static str)> {
    vec![
        ("rdf", RDF),
        ("rdfs", RDFS),
        ("owl", OWL),
        ("xsd", XSD),
        ("schema", SCHEMA),
        ("mm", MM),
        ("core", CORE),
        ("dct", DCT),
        ("oa", OA),
        ("skos", SKOS),
        ("ex", EX),
    ]
}

/// Expands `prefix:local` against the well-known prefixes; absolute IRIs and
/// `<...>` forms pass through.
pub fn expand_curie(text: &str) -> String {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
        return inner.to_string();
    }
    if let Some((prefix, local)) = text.split_once(':') {
        if !local.starts_with("//") {
            if let Some((_, base)) = well_known_prefixes().into_iter().find(|(p, _)| *p == prefix) {
                return format!("{base}{local}");
            }
        }
    }
    text.to_string()
}
