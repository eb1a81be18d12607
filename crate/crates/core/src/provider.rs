//! Sources of per-subword scores and features.
//!
//! The encoder is abstracted away: a [`ScoreProvider`] turns a chunk of a
//! document into an `n x KB` [`LogitMatrix`], and a [`FeatureProvider`]
//! turns it into an `n x d` [`FeatureMatrix`] for the head.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunk::Chunk;
use crate::error::{Error, Result};
use crate::head::project;
use crate::matrix::{FeatureMatrix, HeadWeights, LogitMatrix, Matrix};
use crate::model::{AnnotatedDocument, SpanAnnotation};
use crate::vocab::EntityVocabulary;

pub trait ScoreProvider: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Scores for the tokens of `chunk`, one row per token.
    fn score(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<LogitMatrix>;
}

pub trait FeatureProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn features(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<FeatureMatrix>;
}

/// `<dir>/<doc id>.splm`. Ids that could escape `dir` are rejected.
pub fn document_matrix_path(dir: &Path, doc_id: &str) -> Result<PathBuf> {
    if doc_id.is_empty() || doc_id.contains(['/', '\\', '\0']) || doc_id == "." || doc_id == ".." {
        return Err(Error::Config(format!(
            "document id {doc_id:?} cannot be used as a matrix file name"
        )));
    }
    Ok(dir.join(format!("{doc_id}.splm")))
}

fn load_document_rows(
    dir: &Path,
    doc: &AnnotatedDocument,
    chunk: &Chunk<'_>,
    cols: usize,
) -> Result<Matrix> {
    let path = document_matrix_path(dir, &doc.id)?;
    let matrix = Matrix::load(&path)?;
    if matrix.rows() != doc.tokens.len() || matrix.cols() != cols {
        return Err(Error::MatrixFormat {
            path,
            message: format!(
                "expected {}x{cols} for document {:?}, found {}x{}",
                doc.tokens.len(),
                doc.id,
                matrix.rows(),
                matrix.cols()
            ),
        });
    }
    if chunk.token_start == 0 && chunk.token_end == matrix.rows() {
        Ok(matrix)
    } else {
        matrix.slice_rows(chunk.range())
    }
}

/// Precomputed document-level score matrices, one file per document.
#[derive(Debug, Clone)]
pub struct FileScores {
    dir: PathBuf,
    vocab_size: usize,
}

impl FileScores {
    pub fn new(dir: impl Into<PathBuf>, vocab_size: usize) -> Self {
        FileScores {
            dir: dir.into(),
            vocab_size,
        }
    }
}

impl ScoreProvider for FileScores {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn score(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<LogitMatrix> {
        load_document_rows(&self.dir, doc, chunk, self.vocab_size)
            .map(|m| LogitMatrix::new(m).expect("decoded values are finite"))
    }
}

/// Precomputed document-level feature matrices, one file per document.
#[derive(Debug, Clone)]
pub struct FileFeatures {
    dir: PathBuf,
    dim: usize,
}

impl FileFeatures {
    pub fn new(dir: impl Into<PathBuf>, dim: usize) -> Self {
        FileFeatures {
            dir: dir.into(),
            dim,
        }
    }

    /// Takes the feature dimension from the first document's file.
    pub fn probe(dir: impl Into<PathBuf>, first: &AnnotatedDocument) -> Result<Self> {
        let dir = dir.into();
        let m = Matrix::load(document_matrix_path(&dir, &first.id)?)?;
        Ok(FileFeatures { dir, dim: m.cols() })
    }
}

impl FeatureProvider for FileFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<FeatureMatrix> {
        load_document_rows(&self.dir, doc, chunk, self.dim)
            .map(|m| FeatureMatrix::new(m).expect("decoded values are finite"))
    }
}

/// Document-level feature matrices held in memory, keyed by document id.
#[derive(Debug, Clone, Default)]
pub struct InMemoryFeatures {
    dim: usize,
    docs: HashMap<String, FeatureMatrix>,
}

impl InMemoryFeatures {
    pub fn new(dim: usize) -> Self {
        InMemoryFeatures {
            dim,
            docs: HashMap::new(),
        }
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, features: FeatureMatrix) -> Result<()> {
        if features.cols() != self.dim {
            return Err(Error::Shape(format!(
                "features have dim {}, provider dim is {}",
                features.cols(),
                self.dim
            )));
        }
        self.docs.insert(doc_id.into(), features);
        Ok(())
    }
}

impl FeatureProvider for InMemoryFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<FeatureMatrix> {
        let m = self
            .docs
            .get(&doc.id)
            .ok_or_else(|| Error::Config(format!("no features for document {:?}", doc.id)))?;
        if m.rows() != doc.tokens.len() {
            return Err(Error::Shape(format!(
                "document {:?} has {} tokens but {} feature rows",
                doc.id,
                doc.tokens.len(),
                m.rows()
            )));
        }
        FeatureMatrix::new(m.slice_rows(chunk.range())?)
    }
}

/// Head-backed scores: features composed with head weights.
pub struct HeadScores<F> {
    features: F,
    weights: HeadWeights,
}

impl<F: FeatureProvider> HeadScores<F> {
    pub fn new(features: F, weights: HeadWeights) -> Result<Self> {
        if features.dim() != weights.dim() {
            return Err(Error::Shape(format!(
                "feature dim {} does not match head dim {}",
                features.dim(),
                weights.dim()
            )));
        }
        Ok(HeadScores { features, weights })
    }
}

impl<F: FeatureProvider> ScoreProvider for HeadScores<F> {
    fn vocab_size(&self) -> usize {
        self.weights.vocab_size()
    }

    fn score(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<LogitMatrix> {
        project(&self.features.features(doc, chunk)?, &self.weights)
    }
}

/// Synthesizes scores from gold annotations.
///
/// Each token's gold entity (or `O` outside gold spans) gets score
/// `logit(q)`; every other entity gets `logit((1 - q) / (KB - 1))`. Optional
/// uniform noise in `[-noise, noise]` is seeded per document and token, so
/// results do not depend on chunking.
///
/// Gold comes from the document itself, or, when it has none, from a
/// reference corpus matched by text.
#[derive(Debug, Clone)]
pub struct MockScores {
    vocab: Arc<EntityVocabulary>,
    q: f64,
    noise: f64,
    seed: u64,
    reference: HashMap<String, Vec<SpanAnnotation>>,
}

pub const DEFAULT_MOCK_PROBABILITY: f64 = 0.9;

impl MockScores {
    pub fn new(vocab: Arc<EntityVocabulary>, q: f64) -> Result<Self> {
        if vocab.outside_index().is_none() {
            return Err(Error::Config(
                "mock provider needs an O entry in the vocabulary".to_string(),
            ));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!(
                "mock probability {q} must lie in (0, 1)"
            )));
        }
        Ok(MockScores {
            vocab,
            q,
            noise: 0.0,
            seed: 0,
            reference: HashMap::new(),
        })
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise.abs();
        self.seed = seed;
        self
    }

    pub fn with_reference(mut self, corpus: &[AnnotatedDocument]) -> Self {
        for doc in corpus {
            self.reference
                .entry(doc.text.clone())
                .or_insert_with(|| doc.gold.clone());
        }
        self
    }

    fn token_seed(&self, doc_id: &str, token: usize) -> u64 {
        // FNV-1a over the id, then mixed with the token index and seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in doc_id.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^ (token as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ self.seed.rotate_left(17)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl ScoreProvider for MockScores {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn score(&self, doc: &AnnotatedDocument, chunk: &Chunk<'_>) -> Result<LogitMatrix> {
        let kb = self.vocab.len();
        let gold = if doc.gold.is_empty() {
            self.reference.get(&doc.text).map_or(&[][..], Vec::as_slice)
        } else {
            &doc.gold[..]
        };
        let labelled = AnnotatedDocument {
            id: doc.id.clone(),
            text: String::new(),
            tokens: chunk.tokens.to_vec(),
            gold: gold.to_vec(),
            predicted: Vec::new(),
        };
        let labels = self.vocab.token_labels(&labelled)?;
        let high = logit(self.q);
        let low = if kb > 1 {
            logit((1.0 - self.q) / (kb - 1) as f64)
        } else {
            high
        };
        let mut m = Matrix::zeros(chunk.len(), kb);
        for (row, &label) in labels.iter().enumerate() {
            let target = m.row_mut(row);
            target.fill(low);
            target[label] = high;
            if self.noise > 0.0 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(self.token_seed(&doc.id, chunk.token_start + row));
                for v in target.iter_mut() {
                    *v += rng.random_range(-self.noise..=self.noise);
                }
            }
        }
        LogitMatrix::new(m)
    }
}
