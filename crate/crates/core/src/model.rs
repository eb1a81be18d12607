//! Domain types shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::char_len;

/// The reserved non-entity label.
pub const OUTSIDE: &str = "O";

/// A `(start, end, entity)` triple over raw text. Offsets are char offsets,
/// `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub entity: String,
}

impl SpanAnnotation {
    pub fn new(start: usize, end: usize, entity: impl Into<String>) -> Self {
        SpanAnnotation {
            start,
            end,
            entity: entity.into(),
        }
    }

    pub fn is_outside(&self) -> bool {
        self.entity == OUTSIDE
    }

    pub fn check_bounds(&self, text_len: usize) -> Result<()> {
        if self.start < self.end && self.end <= text_len {
            Ok(())
        } else {
            Err(Error::Offset(format!(
                "span [{}, {}) invalid for text of {} chars",
                self.start, self.end, text_len
            )))
        }
    }

    pub fn overlaps(&self, other: &SpanAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One subword produced by a tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordToken {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    /// Index of the whitespace-delimited word containing this token.
    pub word_index: usize,
    #[serde(default)]
    pub is_punctuation: bool,
    #[serde(default)]
    pub is_function_word: bool,
}

/// Raw text with its tokenization and gold and/or predicted spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<SubwordToken>,
    #[serde(default)]
    pub gold: Vec<SpanAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted: Vec<SpanAnnotation>,
}

impl AnnotatedDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        AnnotatedDocument {
            id: id.into(),
            text: text.into(),
            tokens: Vec::new(),
            gold: Vec::new(),
            predicted: Vec::new(),
        }
    }

    pub fn with_gold(mut self, gold: Vec<SpanAnnotation>) -> Self {
        self.gold = gold;
        self
    }

    /// Checks token ordering, token surfaces, and that gold and predicted
    /// spans are in range and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        let len = char_len(&self.text);
        let chars: Vec<char> = self.text.chars().collect();
        let mut prev_end = 0;
        let mut prev_word = None;
        for (i, token) in self.tokens.iter().enumerate() {
            if token.start >= token.end || token.end > len || token.start < prev_end {
                return Err(Error::Offset(format!(
                    "document {}: token {} at [{}, {}) is out of order or out of range",
                    self.id, i, token.start, token.end
                )));
            }
            let surface: String = chars[token.start..token.end].iter().collect();
            if surface != token.surface {
                return Err(Error::Offset(format!(
                    "document {}: token {} surface {:?} does not match text {:?}",
                    self.id, i, token.surface, surface
                )));
            }
            if let Some(w) = prev_word {
                if token.word_index < w || token.word_index > w + 1 {
                    return Err(Error::Offset(format!(
                        "document {}: token {} has non-contiguous word index {}",
                        self.id, i, token.word_index
                    )));
                }
            }
            prev_end = token.end;
            prev_word = Some(token.word_index);
        }
        for spans in [&self.gold, &self.predicted] {
            check_spans(&self.id, spans, len)?;
        }
        Ok(())
    }
}

fn check_spans(doc: &str, spans: &[SpanAnnotation], len: usize) -> Result<()> {
    for span in spans {
        span.check_bounds(len)
            .map_err(|e| Error::Offset(format!("document {doc}: {e}")))?;
    }
    let mut sorted: Vec<&SpanAnnotation> = spans.iter().collect();
    sorted.sort();
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(Error::Offset(format!(
                "document {doc}: spans [{}, {}) and [{}, {}) overlap",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn token(surface: &str, start: usize, word_index: usize) -> SubwordToken {
        SubwordToken {
            surface: surface.to_string(),
            start,
            end: start + surface.chars().count(),
            word_index,
            is_punctuation: false,
            is_function_word: false,
        }
    }

    #[test]
    fn validate_accepts_consistent_document() {
        let mut doc = AnnotatedDocument::new("d", "EU rejects")
            .with_gold(vec![SpanAnnotation::new(0, 2, "European_Union")]);
        doc.tokens = vec![token("EU", 0, 0), token("reje", 3, 1), token("cts", 7, 1)];
        doc.validate().unwrap();
    }

    #[test]
    fn validate_rejects_overlapping_gold() {
        let doc = AnnotatedDocument::new("d", "abcdef").with_gold(vec![
            SpanAnnotation::new(0, 3, "A"),
            SpanAnnotation::new(2, 4, "B"),
        ]);
        assert!(matches!(doc.validate(), Err(Error::Offset(_))));
    }

    #[test]
    fn validate_rejects_wrong_surface() {
        let mut doc = AnnotatedDocument::new("d", "EU rejects");
        doc.tokens = vec![token("EV", 0, 0)];
        assert!(doc.validate().is_err());
    }

    #[test]
    fn span_bounds() {
        assert!(SpanAnnotation::new(0, 2, "A").check_bounds(2).is_ok());
        assert!(SpanAnnotation::new(2, 2, "A").check_bounds(5).is_err());
        assert!(SpanAnnotation::new(1, 6, "A").check_bounds(5).is_err());
    }

    #[test]
    fn document_json_round_trip() {
        let mut doc = AnnotatedDocument::new("d1", "Grace Kelly")
            .with_gold(vec![SpanAnnotation::new(0, 11, "Grace_Kelly")]);
        doc.tokens = vec![
            token("Grac", 0, 0),
            token("e", 4, 0),
            token("Kell", 6, 1),
            token("y", 10, 1),
        ];
        let json = serde_json::to_string(&doc).unwrap();
        assert!(!json.contains("predicted"));
        let back: AnnotatedDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
    }
}
