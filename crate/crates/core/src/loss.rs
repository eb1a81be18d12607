//! Binary cross-entropy over a selected set of examples, and the hard
//! negative mining that selects them.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LogitMatrix, Matrix};

/// Negative quota used for in-domain fine-tuning batches.
pub const DOMAIN_NEGATIVE_QUOTA: usize = 5_000;
/// Negative quota used for general-knowledge fine-tuning batches.
pub const GENERAL_NEGATIVE_QUOTA: usize = 10_000;
/// Hard negatives taken from each row before the batch-wide ranking.
pub const DEFAULT_HARD_PER_ROW: usize = 8;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x)`, computed as `-softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The selected example set: every gold column of the batch plus exactly
/// `quota` negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    /// Distinct gold columns, ascending.
    pub positives: Vec<usize>,
    /// Hard negatives by descending score, then random fill ascending.
    pub negatives: Vec<usize>,
    /// How many of `negatives` were mined as hard negatives.
    pub hard: usize,
}

impl NegativeSample {
    pub fn selected(&self) -> Vec<usize> {
        self.positives
            .iter()
            .chain(&self.negatives)
            .copied()
            .collect()
    }
}

/// Selects negatives for one batch.
///
/// Each row nominates its `hard_per_row` best-scoring non-gold columns. The
/// union is ranked batch-wide by each column's highest nominated score (ties
/// to the lower column) and the top `quota` are kept. Any shortfall is filled
/// uniformly at random from the remaining non-gold columns. Gold columns of
/// any row are never negatives.
pub fn mine_hard_negatives<R: Rng + ?Sized>(
    scores: &LogitMatrix,
    gold: &[usize],
    quota: usize,
    hard_per_row: usize,
    rng: &mut R,
) -> Result<NegativeSample> {
    let kb = scores.cols();
    if gold.len() != scores.rows() {
        return Err(Error::Shape(format!(
            "{} gold labels for {} score rows",
            gold.len(),
            scores.rows()
        )));
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= kb) {
        return Err(Error::Shape(format!(
            "gold column {bad} out of range for {kb} columns"
        )));
    }
    let positives: BTreeSet<usize> = gold.iter().copied().collect();
    let available = kb - positives.len();
    if quota > available {
        return Err(Error::InfeasibleQuota { quota, available });
    }
    let mut is_gold = vec![false; kb];
    for &g in &positives {
        is_gold[g] = true;
    }

    let mut nominated: BTreeMap<usize, f64> = BTreeMap::new();
    if hard_per_row > 0 && quota > 0 {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(hard_per_row + 1);
        for i in 0..scores.rows() {
            best.clear();
            for (c, &v) in scores.row(i).iter().enumerate() {
                if is_gold[c] {
                    continue;
                }
                if best.len() == hard_per_row && v <= best[hard_per_row - 1].0 {
                    continue;
                }
                let at = best.partition_point(|&(s, _)| s >= v);
                best.insert(at, (v, c));
                best.truncate(hard_per_row);
            }
            for &(v, c) in &best {
                let entry = nominated.entry(c).or_insert(v);
                if v > *entry {
                    *entry = v;
                }
            }
        }
    }
    let mut ranked: Vec<(usize, f64)> = nominated.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(quota);
    let mut negatives: Vec<usize> = ranked.iter().map(|&(c, _)| c).collect();
    let hard = negatives.len();

    let need = quota - hard;
    if need > 0 {
        let mut taken = is_gold;
        for &c in &negatives {
            taken[c] = true;
        }
        let pool: Vec<usize> = (0..kb).filter(|&c| !taken[c]).collect();
        let mut fill: Vec<usize> = rand::seq::index::sample(rng, pool.len(), need)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        fill.sort_unstable();
        negatives.extend(fill);
    }
    Ok(NegativeSample {
        positives: positives.into_iter().collect(),
        negatives,
        hard,
    })
}

/// One loss evaluation: per-row gold columns and the selected columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    /// The features the scores were projected from; enables the head gradient.
    pub features: Option<FeatureMatrix>,
    pub gold_indices: Vec<usize>,
    pub selected: Vec<usize>,
}

impl TrainingBatch {
    /// `N`, the number of selected examples.
    pub fn quota(&self) -> usize {
        self.selected.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean of `per_row`.
    pub value: f64,
    pub per_row: Vec<f64>,
    /// `∂value/∂W` (shape `d x KB`) when the batch carries features.
    pub gradient: Option<Matrix>,
}

/// Mean over rows of the per-row binary cross-entropy with logits, averaged
/// over the `N` selected columns. Each row's gold column must appear in the
/// selection exactly once.
pub fn selected_bce_loss(batch: &TrainingBatch, scores: &LogitMatrix) -> Result<LossReport> {
    let n_sel = batch.selected.len();
    if n_sel == 0 {
        return Err(Error::DegenerateBatch(
            "no selected examples (N = 0)".to_string(),
        ));
    }
    let rows = scores.rows();
    if rows == 0 {
        return Err(Error::DegenerateBatch("batch has no rows".to_string()));
    }
    if batch.gold_indices.len() != rows {
        return Err(Error::Shape(format!(
            "{} gold labels for {rows} score rows",
            batch.gold_indices.len()
        )));
    }
    let kb = scores.cols();
    let mut seen = vec![false; kb];
    for &c in &batch.selected {
        if c >= kb {
            return Err(Error::Shape(format!(
                "selected column {c} out of range for {kb} columns"
            )));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::DegenerateBatch(format!("column {c} selected twice")));
        }
    }
    if let Some(i) = batch.gold_indices.iter().position(|&g| g >= kb || !seen[g]) {
        return Err(Error::DegenerateBatch(format!(
            "gold column of row {i} is not selected"
        )));
    }

    let inv_n = 1.0 / n_sel as f64;
    let inv_rows = 1.0 / rows as f64;
    let mut per_row = Vec::with_capacity(rows);
    // ∂value/∂p for the selected columns, row-major over (row, selected).
    let mut score_grad = Vec::with_capacity(rows * n_sel);
    for (i, &gold) in batch.gold_indices.iter().enumerate() {
        let row = scores.row(i);
        let mut acc = 0.0;
        for &c in &batch.selected {
            let p = row[c];
            let positive = c == gold;
            acc += if positive { softplus(-p) } else { softplus(p) };
            let target = if positive { 1.0 } else { 0.0 };
            score_grad.push((sigmoid(p) - target) * inv_n * inv_rows);
        }
        per_row.push(acc * inv_n);
    }
    let value = per_row.iter().sum::<f64>() * inv_rows;

    let gradient = match &batch.features {
        Some(h) => {
            if h.rows() != rows {
                return Err(Error::Shape(format!(
                    "features have {} rows, scores have {rows}",
                    h.rows()
                )));
            }
            let mut g = Matrix::zeros(h.cols(), kb);
            for i in 0..rows {
                let hi = h.row(i);
                let gi = &score_grad[i * n_sel..(i + 1) * n_sel];
                for (k, &hk) in hi.iter().enumerate() {
                    if hk == 0.0 {
                        continue;
                    }
                    let target = g.row_mut(k);
                    for (&c, &d) in batch.selected.iter().zip(gi) {
                        target[c] += hk * d;
                    }
                }
            }
            Some(g)
        }
        None => None,
    };
    Ok(LossReport {
        value,
        per_row,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(gold: Vec<usize>, selected: Vec<usize>) -> TrainingBatch {
        TrainingBatch {
            features: None,
            gold_indices: gold,
            selected,
        }
    }

    #[test]
    fn single_zero_score_is_ln2() {
        let s = LogitMatrix::from_rows(&[[0.0]]).unwrap();
        let r = selected_bce_loss(&batch(vec![0], vec![0]), &s).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn positive_and_negative() {
        let s = LogitMatrix::from_rows(&[[2.0, -2.0]]).unwrap();
        let r = selected_bce_loss(&batch(vec![0], vec![0, 1]), &s).unwrap();
        // sigmoid(2) = 0.880797; both terms equal -ln(0.880797)
        assert!((r.value - 0.126928).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn saturated_score() {
        let s = LogitMatrix::from_rows(&[[20.0]]).unwrap();
        let r = selected_bce_loss(&batch(vec![0], vec![0]), &s).unwrap();
        assert!((r.value - 2.061153622e-9).abs() < 1e-15, "{}", r.value);
        let extreme = LogitMatrix::from_rows(&[[-800.0, 800.0]]).unwrap();
        let r = selected_bce_loss(&batch(vec![0], vec![0, 1]), &extreme).unwrap();
        assert!((r.value - 800.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_batches() {
        let s = LogitMatrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(
            selected_bce_loss(&batch(vec![0], vec![]), &s),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(matches!(
            selected_bce_loss(&batch(vec![0], vec![1]), &s),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(matches!(
            selected_bce_loss(&batch(vec![0], vec![0, 0]), &s),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn mining_takes_highest_incorrect() {
        let s = LogitMatrix::from_rows(&[[9.0, 8.0, 7.0, 1.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = mine_hard_negatives(&s, &[0], 2, DEFAULT_HARD_PER_ROW, &mut rng).unwrap();
        assert_eq!(sample.negatives, vec![1, 2]);
        assert_eq!(sample.selected(), vec![0, 1, 2]);
        let all = mine_hard_negatives(&s, &[0], 4, 1, &mut rng).unwrap();
        let mut negs = all.negatives.clone();
        negs.sort();
        assert_eq!(negs, vec![1, 2, 3, 4]);
        assert_eq!(all.hard, 1);
    }

    #[test]
    fn mining_rejects_infeasible_quota() {
        let s = LogitMatrix::from_rows(&[[0.0; 5], [0.0; 5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            mine_hard_negatives(&s, &[0, 1], 4, 8, &mut rng),
            Err(Error::InfeasibleQuota {
                quota: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn mining_ties_prefer_lower_column() {
        let s = LogitMatrix::from_rows(&[[0.0, 5.0, 5.0, 5.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = mine_hard_negatives(&s, &[0], 2, 8, &mut rng).unwrap();
        assert_eq!(sample.negatives, vec![1, 2]);
    }
}
