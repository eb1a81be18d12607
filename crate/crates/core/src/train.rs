//! Desk-scale head training: encoder features are fixed and only the head
//! weights are learned.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::{chunk, ChunkConfig};
use crate::error::{Error, Result};
use crate::eval::subword_f1;
use crate::head::project;
use crate::loss::{
    mine_hard_negatives, selected_bce_loss, TrainingBatch, DEFAULT_HARD_PER_ROW,
    DOMAIN_NEGATIVE_QUOTA,
};
use crate::matrix::{HeadWeights, Matrix};
use crate::model::AnnotatedDocument;
use crate::provider::FeatureProvider;
use crate::vocab::EntityVocabulary;

pub const DEFAULT_HEAD_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_PATIENCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam whose moments are only updated for the columns selected in a step.
    SparseAdam,
}

/// Settings of the full-model fine-tuning schedule. Recorded alongside a
/// trained head for reference; the desk-scale trainer does not run an
/// encoder and ignores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSchedule {
    pub encoder_learning_rate: f64,
    pub head_warmup_epochs: usize,
    pub frozen_layers: usize,
    pub gradient_accumulation: usize,
    pub domain_epochs: usize,
}

impl Default for EncoderSchedule {
    fn default() -> Self {
        EncoderSchedule {
            encoder_learning_rate: 5e-5,
            head_warmup_epochs: 3,
            frozen_layers: 4,
            gradient_accumulation: 4,
            domain_epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_head: f64,
    pub epochs: usize,
    /// Negatives per batch. Clamped to the number of non-gold columns when
    /// the vocabulary is too small to honor it.
    pub quota: usize,
    pub hard_per_row: usize,
    pub seed: u64,
    /// Stop after this many consecutive epochs without validation F1 gain.
    pub patience: usize,
    pub optimizer: Optimizer,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub schedule: EncoderSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_head: DEFAULT_HEAD_LEARNING_RATE,
            epochs: 10,
            quota: DOMAIN_NEGATIVE_QUOTA,
            hard_per_row: DEFAULT_HARD_PER_ROW,
            seed: 0,
            patience: DEFAULT_PATIENCE,
            optimizer: Optimizer::SparseAdam,
            init_scale: 0.01,
            schedule: EncoderSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation_f1: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    /// Weights from the epoch with the best validation F1 (the initial
    /// weights when no epoch ran).
    pub weights: HeadWeights,
    pub epochs: Vec<EpochReport>,
    /// Loss of every step, measured before that step's update.
    pub step_losses: Vec<f64>,
    pub stopped_early: bool,
}

pub fn initial_weights(dim: usize, vocab_size: usize, config: &TrainConfig) -> HeadWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale.abs();
    let data = (0..dim * vocab_size)
        .map(|_| {
            if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            }
        })
        .collect();
    HeadWeights::new(Matrix::from_vec(dim, vocab_size, data).expect("shape is consistent"))
        .expect("finite initial weights")
}

struct AdamState {
    m: Matrix,
    v: Matrix,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

fn apply_update(
    weights: &mut HeadWeights,
    gradient: &Matrix,
    columns: &[usize],
    config: &TrainConfig,
    adam: &mut AdamState,
) {
    let w = weights.matrix_mut();
    match config.optimizer {
        Optimizer::Sgd => {
            for k in 0..w.rows() {
                for &c in columns {
                    let g = gradient.get(k, c);
                    w.set(k, c, w.get(k, c) - config.lr_head * g);
                }
            }
        }
        Optimizer::SparseAdam => {
            adam.step += 1;
            let c1 = 1.0 - BETA1.powi(adam.step);
            let c2 = 1.0 - BETA2.powi(adam.step);
            for k in 0..w.rows() {
                for &c in columns {
                    let g = gradient.get(k, c);
                    let m = BETA1 * adam.m.get(k, c) + (1.0 - BETA1) * g;
                    let v = BETA2 * adam.v.get(k, c) + (1.0 - BETA2) * g * g;
                    adam.m.set(k, c, m);
                    adam.v.set(k, c, v);
                    let update = config.lr_head * (m / c1) / ((v / c2).sqrt() + EPSILON);
                    w.set(k, c, w.get(k, c) - update);
                }
            }
        }
    }
}

/// Argmax label of every token of every document under `weights`, paired
/// with the gold labels, for the subword-level F1.
fn validation_f1(
    provider: &dyn FeatureProvider,
    docs: &[AnnotatedDocument],
    vocab: &EntityVocabulary,
    chunking: &ChunkConfig,
    weights: &HeadWeights,
) -> Result<f64> {
    let outside = vocab.outside_index().expect("checked by caller");
    let mut gold = Vec::new();
    let mut predicted = Vec::new();
    for doc in docs {
        let labels = vocab.token_labels(doc)?;
        for c in chunk(&doc.tokens, chunking)? {
            let scores = project(&provider.features(doc, &c)?, weights)?;
            for (row, &label) in labels[c.range()].iter().enumerate() {
                let r = scores.row(row);
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                gold.push(label);
                predicted.push(best);
            }
        }
    }
    subword_f1(&gold, &predicted, &outside)
}

/// Trains the head by gradient descent on the batch loss with per-step hard
/// negative mining. Each chunk of each document is one batch; document order
/// is reshuffled every epoch from the seeded generator.
///
/// After every epoch the subword-level F1 on `validation` (the training
/// corpus when `None`) is measured; training stops once it has failed to
/// improve for `patience` consecutive epochs.
pub fn train_head(
    provider: &dyn FeatureProvider,
    corpus: &[AnnotatedDocument],
    validation: Option<&[AnnotatedDocument]>,
    vocab: &EntityVocabulary,
    chunking: &ChunkConfig,
    config: &TrainConfig,
) -> Result<TrainedHead> {
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".to_string()));
    }
    if vocab.outside_index().is_none() {
        return Err(Error::Config(
            "training needs an O entry in the vocabulary".to_string(),
        ));
    }
    if let Some(doc) = corpus
        .iter()
        .find(|d| d.tokens.is_empty() && !d.text.trim().is_empty())
    {
        return Err(Error::Config(format!(
            "document {:?} is not tokenized",
            doc.id
        )));
    }
    let init = initial_weights(provider.dim(), vocab.len(), config);
    let mut report = TrainedHead {
        weights: init.clone(),
        epochs: Vec::new(),
        step_losses: Vec::new(),
        stopped_early: false,
    };
    if config.epochs == 0 {
        return Ok(report);
    }
    let validation = validation.unwrap_or(corpus);
    let labels: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| vocab.token_labels(d))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = init;
    let mut adam = AdamState {
        m: Matrix::zeros(provider.dim(), vocab.len()),
        v: Matrix::zeros(provider.dim(), vocab.len()),
        step: 0,
    };
    let mut best_f1 = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for &d in &order {
            let doc = &corpus[d];
            for c in chunk(&doc.tokens, chunking)? {
                let features = provider.features(doc, &c)?;
                let scores = project(&features, &weights)?;
                let gold = labels[d][c.range()].to_vec();
                let distinct = {
                    let mut g = gold.clone();
                    g.sort_unstable();
                    g.dedup();
                    g.len()
                };
                let quota = config.quota.min(vocab.len() - distinct);
                let sample =
                    mine_hard_negatives(&scores, &gold, quota, config.hard_per_row, &mut rng)?;
                let batch = TrainingBatch {
                    features: Some(features),
                    gold_indices: gold,
                    selected: sample.selected(),
                };
                let loss = selected_bce_loss(&batch, &scores)?;
                let step = report.step_losses.len();
                let gradient = loss.gradient.as_ref().expect("batch carries features");
                if !loss.value.is_finite() || !gradient.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        loss: loss.value,
                    });
                }
                report.step_losses.push(loss.value);
                epoch_loss += loss.value;
                epoch_steps += 1;
                apply_update(&mut weights, gradient, &batch.selected, config, &mut adam);
                if !weights.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        loss: f64::NAN,
                    });
                }
            }
        }
        let f1 = validation_f1(provider, validation, vocab, chunking, &weights)?;
        let improved = f1 > best_f1;
        if improved {
            best_f1 = f1;
            stale = 0;
            report.weights = weights.clone();
        } else {
            stale += 1;
        }
        report.epochs.push(EpochReport {
            epoch,
            mean_loss: if epoch_steps > 0 {
                epoch_loss / epoch_steps as f64
            } else {
                0.0
            },
            validation_f1: f1,
            improved,
        });
        if stale >= config.patience.max(1) {
            report.stopped_early = epoch + 1 < config.epochs;
            break;
        }
    }
    Ok(report)
}
