//! The subset of NIF 2.0 exchanged in A2KB experiments, in Turtle syntax.
//!
//! Offsets (`nif:beginIndex`, `nif:endIndex`) count Unicode scalar values of
//! `nif:isString`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rio_api::model::{Literal, Subject, Term};
use rio_api::parser::TriplesParser;
use rio_turtle::{TurtleError, TurtleParser};
use spel_core::text::char_len;
use spel_core::SpanAnnotation;

pub const NIF: &str = "http://persistence.uni-leipzig.org/nlp2rdf/ontologies/nif-core#";
pub const ITSRDF: &str = "http://www.w3.org/2005/11/its/rdf#";
const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

pub const DEFAULT_KB_PREFIX: &str = "http://dbpedia.org/resource/";

#[derive(Debug, thiserror::Error)]
pub enum NifError {
    #[error("malformed Turtle: {0}")]
    Parse(String),
    #[error("NIF protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NifPhrase {
    pub begin_index: usize,
    pub end_index: usize,
    /// Absent for phrases a client sends without an entity.
    pub ta_ident_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NifDocument {
    pub context_uri: String,
    pub is_string: String,
    /// Ordered by begin, then end.
    pub phrases: Vec<NifPhrase>,
}

#[derive(Default)]
struct Resource {
    is_context: bool,
    is_string: Option<String>,
    begin: Option<String>,
    end: Option<String>,
    reference_context: Option<String>,
    ta_ident_ref: Option<String>,
    is_phrase: bool,
}

fn subject_key(s: &Subject<'_>) -> String {
    match s {
        Subject::NamedNode(n) => n.iri.to_string(),
        Subject::BlankNode(b) => format!("_:{}", b.id),
        Subject::Triple(t) => t.to_string(),
    }
}

fn literal_value<'a>(t: &'a Term<'a>) -> Option<&'a str> {
    match t {
        Term::Literal(Literal::Simple { value })
        | Term::Literal(Literal::LanguageTaggedString { value, .. })
        | Term::Literal(Literal::Typed { value, .. }) => Some(value),
        _ => None,
    }
}

fn index(value: &Option<String>, what: &str, subject: &str) -> Result<usize, NifError> {
    let raw = value
        .as_deref()
        .ok_or_else(|| NifError::Protocol(format!("{subject} lacks nif:{what}")))?;
    raw.trim().parse().map_err(|_| {
        NifError::Protocol(format!(
            "{subject}: nif:{what} {raw:?} is not a non-negative integer"
        ))
    })
}

/// Extracts the single context and its phrases. Unknown triples are ignored.
pub fn parse_nif(body: &str) -> Result<NifDocument, NifError> {
    let mut resources: BTreeMap<String, Resource> = BTreeMap::new();
    let mut parser = TurtleParser::new(body.as_bytes(), None);
    parser
        .parse_all(&mut |t| -> Result<(), TurtleError> {
            let r = resources.entry(subject_key(&t.subject)).or_default();
            let p = t.predicate.iri;
            let object_iri = match &t.object {
                Term::NamedNode(n) => Some(n.iri),
                _ => None,
            };
            if p == RDF_TYPE {
                match object_iri.and_then(|o| o.strip_prefix(NIF)) {
                    Some("Context") => r.is_context = true,
                    Some("Phrase") => r.is_phrase = true,
                    _ => {}
                }
            } else if let Some(local) = p.strip_prefix(NIF) {
                let value = literal_value(&t.object).map(str::to_string);
                match local {
                    "isString" => r.is_string = value,
                    "beginIndex" => r.begin = value,
                    "endIndex" => r.end = value,
                    "referenceContext" => r.reference_context = object_iri.map(str::to_string),
                    _ => {}
                }
            } else if p == format!("{ITSRDF}taIdentRef") {
                r.ta_ident_ref = object_iri.map(str::to_string);
            }
            Ok(())
        })
        .map_err(|e| NifError::Parse(e.to_string()))?;

    let contexts: Vec<&String> = resources
        .iter()
        .filter(|(_, r)| r.is_context || r.is_string.is_some())
        .map(|(k, _)| k)
        .collect();
    let context_uri = match contexts.as_slice() {
        [] => return Err(NifError::Protocol("no nif:Context in request".to_string())),
        [one] => (*one).clone(),
        many => {
            return Err(NifError::Protocol(format!(
                "expected one nif:Context, found {}",
                many.len()
            )))
        }
    };
    let is_string = resources[&context_uri]
        .is_string
        .clone()
        .ok_or_else(|| NifError::Protocol(format!("context {context_uri} has no nif:isString")))?;
    let len = char_len(&is_string);

    let mut phrases = Vec::new();
    for (key, r) in &resources {
        if *key == context_uri {
            continue;
        }
        let is_phrase = r.is_phrase || r.reference_context.is_some() || r.ta_ident_ref.is_some();
        if !is_phrase {
            continue;
        }
        if r.reference_context
            .as_ref()
            .is_some_and(|c| *c != context_uri)
        {
            return Err(NifError::Protocol(format!(
                "{key} refers to an unknown context"
            )));
        }
        let begin_index = index(&r.begin, "beginIndex", key)?;
        let end_index = index(&r.end, "endIndex", key)?;
        if begin_index >= end_index || end_index > len {
            return Err(NifError::Protocol(format!(
                "{key}: phrase [{begin_index}, {end_index}) is outside a text of {len} characters"
            )));
        }
        phrases.push(NifPhrase {
            begin_index,
            end_index,
            ta_ident_ref: r.ta_ident_ref.clone(),
        });
    }
    phrases.sort_by(|a, b| (a.begin_index, a.end_index).cmp(&(b.begin_index, b.end_index)));
    Ok(NifDocument {
        context_uri,
        is_string,
        phrases,
    })
}

/// An entity identifier as an IRI suffix: spaces become underscores and
/// characters not allowed in a Turtle IRI are percent-encoded.
pub fn entity_iri_suffix(entity: &str) -> String {
    let mut out = String::with_capacity(entity.len());
    for c in entity.chars() {
        match c {
            ' ' => out.push('_'),
            c if c <= ' ' || "<>\"{}|^`\\".contains(c) => {
                let mut buf = [0u8; 4];
                for b in c.encode_utf8(&mut buf).bytes() {
                    let _ = write!(out, "%{b:02X}");
                }
            }
            c => out.push(c),
        }
    }
    out
}

fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn phrase_uri(context_uri: &str, begin: usize, end: usize) -> String {
    let base = context_uri.split('#').next().unwrap_or(context_uri);
    format!("{base}#char={begin},{end}")
}

/// Serializes the context with one `nif:Phrase` per annotation, ordered by
/// begin, then end. Inbound phrases of `document` are not repeated.
pub fn emit_nif(
    document: &NifDocument,
    annotations: &[SpanAnnotation],
    kb_prefix: &str,
) -> Result<String, NifError> {
    let len = char_len(&document.is_string);
    let mut sorted: Vec<&SpanAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| (a.start, a.end, &a.entity).cmp(&(b.start, b.end, &b.entity)));
    if let Some(bad) = sorted.iter().find(|a| a.start >= a.end || a.end > len) {
        return Err(NifError::Protocol(format!(
            "annotation [{}, {}) is outside a text of {len} characters",
            bad.start, bad.end
        )));
    }

    let mut out = String::new();
    let _ = writeln!(out, "@prefix nif: <{NIF}> .");
    let _ = writeln!(out, "@prefix itsrdf: <{ITSRDF}> .");
    let _ = writeln!(out, "@prefix xsd: <{XSD}> .");
    out.push('\n');
    let _ = writeln!(out, "<{}>", document.context_uri);
    out.push_str("    a nif:Context, nif:String, nif:RFC5147String ;\n");
    let _ = writeln!(
        out,
        "    nif:isString \"{}\" ;",
        escape_literal(&document.is_string)
    );
    out.push_str("    nif:beginIndex \"0\"^^xsd:nonNegativeInteger ;\n");
    let _ = writeln!(out, "    nif:endIndex \"{len}\"^^xsd:nonNegativeInteger .");
    for a in sorted {
        let anchor: String = document
            .is_string
            .chars()
            .skip(a.start)
            .take(a.end - a.start)
            .collect();
        out.push('\n');
        let _ = writeln!(
            out,
            "<{}>",
            phrase_uri(&document.context_uri, a.start, a.end)
        );
        out.push_str("    a nif:Phrase, nif:String, nif:RFC5147String ;\n");
        let _ = writeln!(out, "    nif:referenceContext <{}> ;", document.context_uri);
        let _ = writeln!(out, "    nif:anchorOf \"{}\" ;", escape_literal(&anchor));
        let _ = writeln!(
            out,
            "    nif:beginIndex \"{}\"^^xsd:nonNegativeInteger ;",
            a.start
        );
        let _ = writeln!(
            out,
            "    nif:endIndex \"{}\"^^xsd:nonNegativeInteger ;",
            a.end
        );
        let _ = writeln!(
            out,
            "    itsrdf:taIdentRef <{kb_prefix}{}> .",
            entity_iri_suffix(&a.entity)
        );
    }
    Ok(out)
}
