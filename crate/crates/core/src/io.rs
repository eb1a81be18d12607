//! Line-delimited JSON corpus and annotation files.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::Prediction;
use crate::error::{Error, Result};
use crate::model::{AnnotatedDocument, SpanAnnotation};

/// One predicted span in an annotation file. Field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub entity: String,
    pub score: f64,
}

impl AnnotationRecord {
    pub fn new(doc_id: impl Into<String>, p: &Prediction) -> Self {
        AnnotationRecord {
            doc_id: doc_id.into(),
            start: p.start,
            end: p.end,
            entity: p.entity.clone(),
            score: p.score,
        }
    }

    pub fn annotation(&self) -> SpanAnnotation {
        SpanAnnotation::new(self.start, self.end, self.entity.clone())
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("in-memory serialization");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a corpus, one document per line. Documents are validated and ids
/// must be unique.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedDocument>> {
    let path = path.as_ref();
    let docs: Vec<AnnotatedDocument> = read_lines(path)?;
    let mut seen = HashMap::new();
    for (i, doc) in docs.iter().enumerate() {
        doc.validate()?;
        if let Some(first) = seen.insert(doc.id.as_str(), i) {
            return Err(Error::Alignment(format!(
                "{}: document id {:?} appears on records {} and {}",
                path.display(),
                doc.id,
                first + 1,
                i + 1
            )));
        }
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[AnnotatedDocument]) -> Result<()> {
    write_lines(path.as_ref(), docs)
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    read_lines(path.as_ref())
}

pub fn write_annotations(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    write_lines(path.as_ref(), records)
}

/// Groups annotation records by document id, keeping file order.
pub fn group_annotations(records: &[AnnotationRecord]) -> HashMap<String, Vec<SpanAnnotation>> {
    let mut out: HashMap<String, Vec<SpanAnnotation>> = HashMap::new();
    for r in records {
        out.entry(r.doc_id.clone())
            .or_default()
            .push(r.annotation());
    }
    out
}
