//! Structured-prediction entity linking.
//!
//! Every subword of a document is scored against a fixed entity vocabulary;
//! the scores are aggregated word by word into span annotations, optionally
//! pruned with mention-specific candidate lists and normalized through a
//! redirect table. The encoder that produces the scores is pluggable (see
//! [`provider`]); the linear head on top of it can be trained at desk scale
//! (see [`train`]).

pub mod aggregate;
pub mod candidates;
pub mod chunk;
pub mod error;
pub mod eval;
pub mod head;
pub mod io;
pub mod lexicon;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod provider;
pub mod text;
pub mod tokenize;
pub mod train;
pub mod vocab;

pub use aggregate::{aggregate, AggregationConfig, CandidatePolicy, Prediction, ProbabilityMap};
pub use candidates::{CandidateStore, OccurrenceKey, RedirectTable, StoreKind};
pub use chunk::{chunk, merge_chunk_scores, Chunk, ChunkConfig};
pub use error::{Error, Result};
pub use eval::{score_el, score_md, subword_f1, MatchMode, MatchReport};
pub use head::{mask_scores, project, shrink_head};
pub use lexicon::Lexicon;
pub use loss::{mine_hard_negatives, selected_bce_loss, LossReport, NegativeSample, TrainingBatch};
pub use matrix::{FeatureMatrix, HeadWeights, LogitMatrix, Matrix};
pub use model::{AnnotatedDocument, SpanAnnotation, SubwordToken, OUTSIDE};
pub use pipeline::Linker;
pub use provider::{
    FeatureProvider, FileFeatures, FileScores, HeadScores, MockScores, ScoreProvider,
};
pub use tokenize::{TokenizationMode, Tokenizer};
pub use train::{train_head, TrainConfig, TrainedHead};
pub use vocab::EntityVocabulary;
