//! The end-to-end linker: tokenize, chunk, score, merge, aggregate, and
//! normalize redirects.

use std::sync::Arc;

use crate::aggregate::{aggregate, AggregationConfig, Prediction};
use crate::candidates::{CandidateStore, RedirectTable};
use crate::chunk::{chunk, merge_chunk_scores, ChunkConfig};
use crate::error::{Error, Result};
use crate::model::AnnotatedDocument;
use crate::provider::ScoreProvider;
use crate::tokenize::{TokenizationMode, Tokenizer};
use crate::vocab::EntityVocabulary;

/// Immutable linking pipeline, safe to share across threads.
#[derive(Clone)]
pub struct Linker {
    pub vocab: Arc<EntityVocabulary>,
    pub tokenizer: Tokenizer,
    pub mode: TokenizationMode,
    pub chunking: ChunkConfig,
    pub aggregation: AggregationConfig,
    pub provider: Arc<dyn ScoreProvider>,
    pub candidates: Option<Arc<CandidateStore>>,
    pub redirects: Option<Arc<RedirectTable>>,
}

impl std::fmt::Debug for Linker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linker")
            .field("vocab_size", &self.vocab.len())
            .field("mode", &self.mode)
            .field("chunking", &self.chunking)
            .field("aggregation", &self.aggregation)
            .finish_non_exhaustive()
    }
}

impl Linker {
    /// A linker with default tokenization, chunking and aggregation and no
    /// candidate store or redirects.
    pub fn new(vocab: Arc<EntityVocabulary>, provider: Arc<dyn ScoreProvider>) -> Result<Self> {
        if provider.vocab_size() != vocab.len() {
            return Err(Error::Config(format!(
                "score provider covers {} entities, vocabulary has {}",
                provider.vocab_size(),
                vocab.len()
            )));
        }
        if vocab.outside_index().is_none() {
            return Err(Error::Config("the vocabulary has no O entry".to_string()));
        }
        Ok(Linker {
            vocab,
            tokenizer: Tokenizer::default(),
            mode: TokenizationMode::default(),
            chunking: ChunkConfig::default(),
            aggregation: AggregationConfig::default(),
            provider,
            candidates: None,
            redirects: None,
        })
    }

    /// Tokenizes `doc` if it carries no tokens yet. Mention-aware mode uses
    /// the document's gold spans as mentions.
    pub fn prepare(&self, doc: &AnnotatedDocument) -> Result<AnnotatedDocument> {
        let mut doc = doc.clone();
        if doc.tokens.is_empty() {
            let mentions = (self.mode == TokenizationMode::MentionAware).then_some(&doc.gold[..]);
            doc.tokens = self.tokenizer.tokenize(&doc.text, self.mode, mentions)?;
        }
        doc.validate()?;
        Ok(doc)
    }

    /// Links an already prepared document.
    pub fn link_prepared(&self, doc: &AnnotatedDocument) -> Result<Vec<Prediction>> {
        if doc.tokens.is_empty() {
            return Ok(Vec::new());
        }
        let chunks = chunk(&doc.tokens, &self.chunking)?;
        let per_chunk = chunks
            .iter()
            .map(|c| self.provider.score(doc, c))
            .collect::<Result<Vec<_>>>()?;
        let ranges: Vec<_> = chunks.iter().map(|c| c.range()).collect();
        let scores = merge_chunk_scores(&ranges, &per_chunk)?;
        let mut predictions = aggregate(
            doc,
            &scores,
            &self.vocab,
            &self.aggregation,
            self.candidates.as_deref(),
        )?;
        if let Some(table) = &self.redirects {
            for p in predictions.iter_mut() {
                let target = table.resolve(&p.entity);
                if target != p.entity {
                    p.entity = target.to_string();
                }
            }
        }
        Ok(predictions)
    }

    pub fn link(&self, doc: &AnnotatedDocument) -> Result<Vec<Prediction>> {
        self.link_prepared(&self.prepare(doc)?)
    }
}
