//! A GERBIL A2KB annotator endpoint: NIF documents in, NIF annotations out.

pub mod nif;
pub mod service;

pub use nif::{emit_nif, parse_nif, NifDocument, NifError, NifPhrase, DEFAULT_KB_PREFIX};
pub use service::{router, serve, serve_on, AnnotationService};
