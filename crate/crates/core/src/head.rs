//! The linear classification head and its shrinking to a subset of the
//! vocabulary.

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, HeadWeights, LogitMatrix, Matrix};
use crate::vocab::EntityVocabulary;

/// Score given to masked-out columns by [`mask_scores`]. Finite so that the
/// matrix invariants hold; its sigmoid is exactly zero.
pub const MASKED_SCORE: f64 = -1.0e30;

/// `P = H W`. Scores are left unnormalized.
pub fn project(features: &FeatureMatrix, weights: &HeadWeights) -> Result<LogitMatrix> {
    if features.cols() != weights.dim() {
        return Err(Error::Shape(format!(
            "features have dim {}, head expects {}",
            features.cols(),
            weights.dim()
        )));
    }
    let kb = weights.vocab_size();
    let mut out = Matrix::zeros(features.rows(), kb);
    for i in 0..features.rows() {
        let h = features.row(i);
        let target = out.row_mut(i);
        for (k, &hk) in h.iter().enumerate() {
            if hk == 0.0 {
                continue;
            }
            for (t, &w) in target.iter_mut().zip(weights.row(k)) {
                *t += hk * w;
            }
        }
    }
    LogitMatrix::new(out)
}

fn subset_columns(vocab: &EntityVocabulary, subset: &EntityVocabulary) -> Result<Vec<usize>> {
    subset
        .entries()
        .iter()
        .map(|id| {
            vocab
                .index_of(id)
                .ok_or_else(|| Error::UnknownEntity(id.clone()))
        })
        .collect()
}

/// Keeps only the head columns of `subset`, in `subset` order.
pub fn shrink_head(
    weights: &HeadWeights,
    vocab: &EntityVocabulary,
    subset: &EntityVocabulary,
) -> Result<HeadWeights> {
    if weights.vocab_size() != vocab.len() {
        return Err(Error::Shape(format!(
            "head has {} columns, vocabulary has {} entries",
            weights.vocab_size(),
            vocab.len()
        )));
    }
    let columns = subset_columns(vocab, subset)?;
    HeadWeights::new(weights.select_columns(&columns)?)
}

/// Masking alternative to [`shrink_head`]: same width as `vocab`, with every
/// column outside `subset` replaced by [`MASKED_SCORE`].
pub fn mask_scores(
    scores: &LogitMatrix,
    vocab: &EntityVocabulary,
    subset: &EntityVocabulary,
) -> Result<LogitMatrix> {
    if scores.cols() != vocab.len() {
        return Err(Error::Shape(format!(
            "scores have {} columns, vocabulary has {} entries",
            scores.cols(),
            vocab.len()
        )));
    }
    let mut keep = vec![false; vocab.len()];
    for c in subset_columns(vocab, subset)? {
        keep[c] = true;
    }
    let mut out = scores.matrix().clone();
    for i in 0..out.rows() {
        for (v, &k) in out.row_mut(i).iter_mut().zip(&keep) {
            if !k {
                *v = MASKED_SCORE;
            }
        }
    }
    LogitMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-3.0..3.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_features() {
        let h = FeatureMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let w = HeadWeights::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(project(&h, &w).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let h = FeatureMatrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let w = HeadWeights::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(project(&h, &w).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random(&mut rng, 3, 5);
        let w = random(&mut rng, 5, 7);
        let p = project(
            &FeatureMatrix::new(h.clone()).unwrap(),
            &HeadWeights::new(w.clone()).unwrap(),
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..7 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += h.get(i, k) * w.get(k, j);
                }
                assert!((p.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let h = FeatureMatrix::from_rows(&[[1.0, 1.0, 1.0]]).unwrap();
        let w = HeadWeights::from_rows(&[[1.0], [1.0]]).unwrap();
        assert!(matches!(project(&h, &w), Err(Error::Shape(_))));
    }

    #[test]
    fn shrink_selects_columns_in_subset_order() {
        let vocab = EntityVocabulary::build(["A", "B", "C"], true).unwrap();
        let subset = EntityVocabulary::build(["B"], true).unwrap();
        let w = HeadWeights::from_rows(&[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]).unwrap();
        let shrunk = shrink_head(&w, &vocab, &subset).unwrap();
        assert_eq!(shrunk.as_slice(), &[2.0, 4.0, 6.0, 8.0]);

        let unknown = EntityVocabulary::build(["Z"], false).unwrap();
        assert!(matches!(
            shrink_head(&w, &vocab, &unknown),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn shrink_then_project_equals_project_then_select() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ids: Vec<String> = (0..9).map(|i| format!("E{i}")).collect();
        let vocab = EntityVocabulary::build(ids.clone(), true).unwrap();
        let subset = EntityVocabulary::build([&ids[7], &ids[2], &ids[4]], true).unwrap();
        for _ in 0..20 {
            let h = FeatureMatrix::new(random(&mut rng, 4, 6)).unwrap();
            let w = HeadWeights::new(random(&mut rng, 6, vocab.len())).unwrap();
            let a = project(&h, &shrink_head(&w, &vocab, &subset).unwrap()).unwrap();
            let cols: Vec<usize> = subset
                .entries()
                .iter()
                .map(|e| vocab.index_of(e).unwrap())
                .collect();
            let b = project(&h, &w).unwrap().select_columns(&cols).unwrap();
            assert_eq!(a.as_slice(), b.as_slice());

            // Masking keeps the argmax over subset columns.
            let masked = mask_scores(&project(&h, &w).unwrap(), &vocab, &subset).unwrap();
            for i in 0..4 {
                let best_masked = argmax(masked.row(i));
                let best_shrunk = cols[argmax(a.row(i))];
                assert_eq!(best_masked, best_shrunk);
            }
        }
    }

    fn argmax(row: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}
