//! Context-sensitive aggregation of subword scores into span annotations.
//!
//! Per subword, the top `k` entities are kept with their probabilities.
//! Subwords of one whitespace word are merged into a word distribution by
//! averaging (an entity missing from a subword's top-k contributes 0).
//! Consecutive words with the same best entity are joined into a span,
//! whose distribution is the mean of its words'. Non-`O` spans whose surface
//! has a candidate list keep only listed entities. Finally spans that are a
//! lone punctuation subword or a lone function word become `O`, and `O` spans
//! are dropped.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateStore, OccurrenceKey};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::loss::sigmoid;
use crate::matrix::LogitMatrix;
use crate::model::{AnnotatedDocument, SpanAnnotation, SubwordToken};
use crate::text::boundary_table;
use crate::vocab::EntityVocabulary;

pub const DEFAULT_TOP_K: usize = 10;

/// How raw scores become per-subword probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMap {
    /// Elementwise logistic function.
    #[default]
    Sigmoid,
    /// Row-wise softmax.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    #[default]
    None,
    /// Look mentions up by surface only.
    ContextAgnostic,
    /// Look mentions up by (document, span) first, then by surface.
    ContextAware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig {
    pub k: usize,
    pub probability: ProbabilityMap,
    pub candidate_policy: CandidatePolicy,
    pub lexicon: Lexicon,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            k: DEFAULT_TOP_K,
            probability: ProbabilityMap::default(),
            candidate_policy: CandidatePolicy::default(),
            lexicon: Lexicon::default(),
        }
    }
}

/// `(entity column, probability)` pairs of one subword, best first.
pub type SubwordTopK = Vec<(usize, f64)>;

/// Top `k` entities of every row, ranked by raw score (ties to the lower
/// column), with probabilities from `map`.
pub fn topk(scores: &LogitMatrix, k: usize, map: ProbabilityMap) -> Result<Vec<SubwordTopK>> {
    if k == 0 || k > scores.cols() {
        return Err(Error::Config(format!(
            "top-k of {k} needs 1 <= k <= {} entities",
            scores.cols()
        )));
    }
    let mut out = Vec::with_capacity(scores.rows());
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..scores.rows() {
        let row = scores.row(i);
        best.clear();
        for (c, &v) in row.iter().enumerate() {
            if best.len() == k && v <= best[k - 1].0 {
                continue;
            }
            let at = best.partition_point(|&(s, _)| s >= v);
            best.insert(at, (v, c));
            best.truncate(k);
        }
        let entries = match map {
            ProbabilityMap::Sigmoid => best.iter().map(|&(v, c)| (c, sigmoid(v))).collect(),
            ProbabilityMap::Softmax => {
                let max = best[0].0;
                let norm: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                best.iter()
                    .map(|&(v, c)| (c, (v - max).exp() / norm))
                    .collect()
            }
        };
        out.push(entries);
    }
    Ok(out)
}

/// Best entity of a distribution; ties go to the lower column.
pub fn argmax(scores: &BTreeMap<usize, f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (&e, &p) in scores {
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((e, p));
        }
    }
    best
}

/// Averages subword distributions: the union of their entities, each scored
/// by its summed probability divided by the number of subwords.
pub fn average(parts: &[&BTreeMap<usize, f64>]) -> BTreeMap<usize, f64> {
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for part in parts {
        for (&e, &p) in part.iter() {
            *sums.entry(e).or_insert(0.0) += p;
        }
    }
    let n = parts.len() as f64;
    sums.values_mut().for_each(|v| *v /= n);
    sums
}

/// Word-level distribution over the subwords of one word.
pub fn word_distribution(subwords: &[SubwordTopK]) -> BTreeMap<usize, f64> {
    let maps: Vec<BTreeMap<usize, f64>> = subwords
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    average(&maps.iter().collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordAnnotation {
    pub word_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub entity_scores: BTreeMap<usize, f64>,
    pub top_entity: usize,
}

/// A joined run of words.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanCandidate {
    pub word_start: usize,
    pub word_end: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub entity_scores: BTreeMap<usize, f64>,
    pub top_entity: usize,
}

impl SpanCandidate {
    pub fn top_score(&self) -> f64 {
        self.entity_scores
            .get(&self.top_entity)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Groups tokens by `word_index` and builds one word annotation per word.
pub fn group_words(tokens: &[SubwordToken], per_subword: &[SubwordTopK]) -> Vec<WordAnnotation> {
    let mut words = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let mut end = start + 1;
        while end < tokens.len() && tokens[end].word_index == tokens[start].word_index {
            end += 1;
        }
        let entity_scores = word_distribution(&per_subword[start..end]);
        let (top_entity, _) = argmax(&entity_scores).expect("k >= 1 gives a non-empty union");
        words.push(WordAnnotation {
            word_index: tokens[start].word_index,
            token_start: start,
            token_end: end,
            char_start: tokens[start].start,
            char_end: tokens[end - 1].end,
            entity_scores,
            top_entity,
        });
        start = end;
    }
    words
}

/// Joins maximal runs of consecutive words sharing a top entity. Words are
/// indexed by their position in `words`.
pub fn join_spans(words: &[WordAnnotation]) -> Vec<SpanCandidate> {
    let mut spans = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let mut end = start + 1;
        while end < words.len() && words[end].top_entity == words[start].top_entity {
            end += 1;
        }
        let run = &words[start..end];
        let entity_scores = average(&run.iter().map(|w| &w.entity_scores).collect::<Vec<_>>());
        spans.push(SpanCandidate {
            word_start: start,
            word_end: end,
            token_start: run[0].token_start,
            token_end: run[run.len() - 1].token_end,
            char_start: run[0].char_start,
            char_end: run[run.len() - 1].char_end,
            entity_scores,
            top_entity: words[start].top_entity,
        });
        start = end;
    }
    spans
}

/// Restricts a span to the entities in `candidates` and re-selects its best
/// entity. A span left with no entities becomes `outside`.
pub fn restrict_to_candidates(
    span: &SpanCandidate,
    candidates: &[String],
    vocab: &EntityVocabulary,
    outside: usize,
) -> SpanCandidate {
    let allowed: HashSet<&str> = candidates.iter().map(String::as_str).collect();
    let entity_scores: BTreeMap<usize, f64> = span
        .entity_scores
        .iter()
        .filter(|(&e, _)| vocab.id_of(e).is_some_and(|id| allowed.contains(id)))
        .map(|(&e, &p)| (e, p))
        .collect();
    let top_entity = argmax(&entity_scores).map_or(outside, |(e, _)| e);
    SpanCandidate {
        entity_scores,
        top_entity,
        ..span.clone()
    }
}

/// Candidate filtering of one span. Applies only to non-`O` spans whose
/// surface (or occurrence, for context-aware lookups) has an entry in the
/// store; everything else passes through unchanged.
pub fn filter_by_candidates(
    span: &SpanCandidate,
    surface: &str,
    context: Option<&OccurrenceKey>,
    store: &CandidateStore,
    vocab: &EntityVocabulary,
    outside: usize,
) -> SpanCandidate {
    if span.top_entity == outside {
        return span.clone();
    }
    match store.lookup(surface, context) {
        Some(candidates) => restrict_to_candidates(span, candidates, vocab, outside),
        None => span.clone(),
    }
}

/// Overrides lone punctuation subwords and lone function words to `O`, then
/// drops every `O` span.
pub fn postprocess(
    spans: Vec<SpanCandidate>,
    tokens: &[SubwordToken],
    words: &[WordAnnotation],
    lexicon: &Lexicon,
    outside: usize,
) -> Vec<SpanCandidate> {
    spans
        .into_iter()
        .filter(|span| {
            if span.top_entity == outside {
                return false;
            }
            if span.token_end - span.token_start == 1
                && lexicon.is_punctuation(&tokens[span.token_start].surface)
            {
                return false;
            }
            if span.word_end - span.word_start == 1 {
                let w = &words[span.word_start];
                let word: String = tokens[w.token_start..w.token_end]
                    .iter()
                    .map(|t| t.surface.as_str())
                    .collect();
                if lexicon.is_function_word(&word) {
                    return false;
                }
            }
            true
        })
        .collect()
}

/// A predicted span with the score of its chosen entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: usize,
    pub end: usize,
    pub entity: String,
    pub score: f64,
}

impl Prediction {
    pub fn annotation(&self) -> SpanAnnotation {
        SpanAnnotation::new(self.start, self.end, self.entity.clone())
    }
}

/// Runs the full aggregation over one tokenized document and its
/// document-level scores.
pub fn aggregate(
    doc: &AnnotatedDocument,
    scores: &LogitMatrix,
    vocab: &EntityVocabulary,
    config: &AggregationConfig,
    store: Option<&CandidateStore>,
) -> Result<Vec<Prediction>> {
    let outside = vocab.outside_index().ok_or_else(|| {
        Error::Config("aggregation needs an O entry in the vocabulary".to_string())
    })?;
    if scores.rows() != doc.tokens.len() {
        return Err(Error::Shape(format!(
            "document {:?} has {} tokens but {} score rows",
            doc.id,
            doc.tokens.len(),
            scores.rows()
        )));
    }
    if doc.tokens.is_empty() {
        return Ok(Vec::new());
    }
    if scores.cols() != vocab.len() {
        return Err(Error::Shape(format!(
            "scores have {} columns, vocabulary has {} entries",
            scores.cols(),
            vocab.len()
        )));
    }
    // Small vocabularies cannot fill a top-k list; keep every entity then.
    let per_subword = topk(scores, config.k.min(vocab.len()), config.probability)?;
    let words = group_words(&doc.tokens, &per_subword);
    let mut spans = join_spans(&words);

    let store = store.filter(|_| config.candidate_policy != CandidatePolicy::None);
    if let Some(store) = store {
        let bounds = boundary_table(&doc.text);
        for span in spans.iter_mut() {
            let (Some(&b), Some(&e)) = (bounds.get(span.char_start), bounds.get(span.char_end))
            else {
                return Err(Error::Offset(format!(
                    "document {:?}: span [{}, {}) outside text",
                    doc.id, span.char_start, span.char_end
                )));
            };
            let context = (config.candidate_policy == CandidatePolicy::ContextAware)
                .then(|| OccurrenceKey::new(doc.id.clone(), span.char_start, span.char_end));
            *span = filter_by_candidates(
                span,
                &doc.text[b..e],
                context.as_ref(),
                store,
                vocab,
                outside,
            );
        }
    }

    let kept = postprocess(spans, &doc.tokens, &words, &config.lexicon, outside);
    Ok(kept
        .into_iter()
        .map(|span| Prediction {
            start: span.char_start,
            end: span.char_end,
            entity: vocab
                .id_of(span.top_entity)
                .expect("column in vocabulary")
                .to_string(),
            score: span.top_score(),
        })
        .collect())
}
