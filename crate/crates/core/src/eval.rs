//! Strong-matching micro precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotatedDocument, SpanAnnotation};
use crate::vocab::EntityVocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// `(start, end, entity)` must match exactly.
    El,
    /// `(start, end)` must match exactly; entities are ignored.
    Md,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::El => "EL",
            MatchMode::Md => "MD",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub id: String,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub mode: MatchMode,
    #[serde(flatten)]
    pub counts: Counts,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
    pub per_document: Vec<DocumentCounts>,
}

impl MatchReport {
    fn from_documents(mode: MatchMode, per_document: Vec<DocumentCounts>) -> Self {
        let mut counts = Counts::default();
        for d in &per_document {
            counts += d.counts;
        }
        MatchReport {
            mode,
            counts,
            micro_p: counts.precision(),
            micro_r: counts.recall(),
            micro_f1: counts.f1(),
            per_document,
        }
    }

    /// Fixed-width table with one row per document and a pooled total.
    pub fn to_table(&self) -> String {
        let width = self
            .per_document
            .iter()
            .map(|d| d.id.chars().count())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!(
            "{:<width$}  {:>6} {:>6} {:>6}  {:>7} {:>7} {:>7}\n",
            "document", "tp", "fp", "fn", "P", "R", "F1"
        );
        let mut line = |id: &str, c: &Counts| {
            out.push_str(&format!(
                "{:<width$}  {:>6} {:>6} {:>6}  {:>7.4} {:>7.4} {:>7.4}\n",
                id,
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            ));
        };
        for d in &self.per_document {
            line(&d.id, &d.counts);
        }
        line(&format!("micro ({})", self.mode), &self.counts);
        out
    }
}

/// Gold spans that count toward scoring: not `O`, and inside `in_kb` when a
/// vocabulary is given.
fn in_kb<'a>(
    spans: &'a [SpanAnnotation],
    vocab: Option<&'a EntityVocabulary>,
) -> impl Iterator<Item = &'a SpanAnnotation> + 'a {
    spans
        .iter()
        .filter(move |s| !s.is_outside() && vocab.is_none_or(|v| v.contains(&s.entity)))
}

type Key = (usize, usize, Option<String>);

fn key(span: &SpanAnnotation, mode: MatchMode) -> Key {
    let entity = match mode {
        MatchMode::El => Some(span.entity.clone()),
        MatchMode::Md => None,
    };
    (span.start, span.end, entity)
}

/// Counts one document. Duplicate predictions are collapsed before matching.
pub fn count_document(
    gold: &[SpanAnnotation],
    predicted: &[SpanAnnotation],
    mode: MatchMode,
    vocab: Option<&EntityVocabulary>,
) -> Counts {
    let gold: BTreeSet<Key> = in_kb(gold, vocab).map(|s| key(s, mode)).collect();
    let predicted: BTreeSet<Key> = predicted
        .iter()
        .filter(|s| !s.is_outside())
        .map(|s| key(s, mode))
        .collect();
    let tp = predicted.intersection(&gold).count();
    Counts {
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Scores predictions against gold documents, pooling counts over all
/// documents. `predicted` maps document id to predicted spans; gold documents
/// with no entry have no predictions. A predicted id absent from the gold set
/// is an alignment error.
pub fn score(
    gold: &[AnnotatedDocument],
    predicted: &HashMap<String, Vec<SpanAnnotation>>,
    mode: MatchMode,
    vocab: Option<&EntityVocabulary>,
) -> Result<MatchReport> {
    let mut by_id: BTreeMap<&str, &AnnotatedDocument> = BTreeMap::new();
    for doc in gold {
        if by_id.insert(doc.id.as_str(), doc).is_some() {
            return Err(Error::Alignment(format!(
                "duplicate gold document {:?}",
                doc.id
            )));
        }
    }
    let mut unknown: Vec<&String> = predicted
        .keys()
        .filter(|id| !by_id.contains_key(id.as_str()))
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::Alignment(format!(
            "predictions for unknown documents: {unknown:?}"
        )));
    }
    let per_document = gold
        .iter()
        .map(|doc| DocumentCounts {
            id: doc.id.clone(),
            counts: count_document(
                &doc.gold,
                predicted.get(&doc.id).map_or(&[][..], Vec::as_slice),
                mode,
                vocab,
            ),
        })
        .collect();
    Ok(MatchReport::from_documents(mode, per_document))
}

pub fn score_el(
    gold: &[AnnotatedDocument],
    predicted: &HashMap<String, Vec<SpanAnnotation>>,
    vocab: Option<&EntityVocabulary>,
) -> Result<MatchReport> {
    score(gold, predicted, MatchMode::El, vocab)
}

pub fn score_md(
    gold: &[AnnotatedDocument],
    predicted: &HashMap<String, Vec<SpanAnnotation>>,
    vocab: Option<&EntityVocabulary>,
) -> Result<MatchReport> {
    score(gold, predicted, MatchMode::Md, vocab)
}

/// Predictions taken from each document's own `predicted` field.
pub fn predictions_of(docs: &[AnnotatedDocument]) -> HashMap<String, Vec<SpanAnnotation>> {
    docs.iter()
        .map(|d| (d.id.clone(), d.predicted.clone()))
        .collect()
}

/// Micro F1 over per-token labels, ignoring tokens where both sides are
/// `outside`.
pub fn subword_f1<T: PartialEq>(gold: &[T], predicted: &[T], outside: &T) -> Result<f64> {
    Ok(subword_counts(gold, predicted, outside)?.f1())
}

pub fn subword_counts<T: PartialEq>(gold: &[T], predicted: &[T], outside: &T) -> Result<Counts> {
    if gold.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} gold labels vs {} predicted labels",
            gold.len(),
            predicted.len()
        )));
    }
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(predicted) {
        let g_in = g != outside;
        let p_in = p != outside;
        if g_in && p_in && g == p {
            c.tp += 1;
        } else {
            if p_in {
                c.fp += 1;
            }
            if g_in {
                c.fn_ += 1;
            }
        }
    }
    Ok(c)
}
