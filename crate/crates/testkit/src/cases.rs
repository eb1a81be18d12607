//! Random instances and their oracle checks. Every `check_*` function
//! returns `Err` with a description of the first disagreement.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use spel_core::aggregate::{aggregate, AggregationConfig, CandidatePolicy};
use spel_core::candidates::{CandidateStore, OccurrenceKey, RedirectTable, StoreKind};
use spel_core::eval::{score, MatchMode};
use spel_core::loss::{mine_hard_negatives, selected_bce_loss, TrainingBatch};
use spel_core::{
    head, AnnotatedDocument, EntityVocabulary, FeatureMatrix, HeadWeights, Lexicon, LogitMatrix,
    Matrix, SpanAnnotation, TokenizationMode, Tokenizer,
};

use crate::oracle::{
    reference_aggregate, scalar_loss, set_prf, RefInput, RefToken, ReferenceStore,
};

fn random_rows<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

fn selection<R: Rng>(rng: &mut R, gold: &[usize], kb: usize, extra_max: usize) -> Vec<usize> {
    let mut selected: Vec<usize> = gold
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rest: Vec<usize> = (0..kb).filter(|c| !selected.contains(c)).collect();
    rest.shuffle(rng);
    let extra = rng.random_range(0..=extra_max.min(rest.len()));
    selected.extend(&rest[..extra]);
    selected.shuffle(rng);
    selected
}

/// Loss against the scalar oracle on a random batch with `N <= 8`.
pub fn check_loss<R: Rng>(rng: &mut R) -> Result<(), String> {
    let kb = rng.random_range(2..=10);
    let rows = rng.random_range(1..=4);
    let scores = random_rows(rng, rows, kb, -8.0, 8.0);
    let gold: Vec<usize> = (0..rows).map(|_| rng.random_range(0..kb)).collect();
    let distinct = gold.iter().collect::<BTreeSet<_>>().len();
    let selected = selection(rng, &gold, kb, 8 - distinct.min(8));
    let selected: Vec<usize> = selected.into_iter().take(8.max(distinct)).collect();
    let batch = TrainingBatch {
        features: None,
        gold_indices: gold.clone(),
        selected: selected.clone(),
    };
    let got = selected_bce_loss(&batch, &LogitMatrix::from_rows(&scores).unwrap())
        .map_err(|e| e.to_string())?
        .value;
    let want = scalar_loss(&scores, &gold, &selected);
    if (got - want).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(format!(
            "loss {got} vs oracle {want} (scores {scores:?}, gold {gold:?}, selected {selected:?})"
        ))
    }
}

/// Analytic head gradient against central finite differences; returns the
/// relative error `|a - n| / (|a| + |n|)` in the Euclidean norm.
pub fn gradient_relative_error<R: Rng>(rng: &mut R) -> Result<f64, String> {
    let d = rng.random_range(1..=5);
    let kb = rng.random_range(2..=7);
    let rows = rng.random_range(1..=4);
    let h = FeatureMatrix::from_rows(&random_rows(rng, rows, d, -1.0, 1.0)).unwrap();
    let w0 = random_rows(rng, d, kb, -1.0, 1.0);
    let gold: Vec<usize> = (0..rows).map(|_| rng.random_range(0..kb)).collect();
    let selected = selection(rng, &gold, kb, kb);
    let batch = TrainingBatch {
        features: Some(h.clone()),
        gold_indices: gold,
        selected,
    };
    let loss_at = |w: &Vec<Vec<f64>>| -> f64 {
        let weights = HeadWeights::from_rows(w).unwrap();
        selected_bce_loss(&batch, &head::project(&h, &weights).unwrap())
            .unwrap()
            .value
    };
    let report = selected_bce_loss(
        &batch,
        &head::project(&h, &HeadWeights::from_rows(&w0).unwrap()).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let analytic = report.gradient.ok_or("no gradient returned")?;
    let step = 1e-5;
    let (mut diff, mut norm) = (0.0, 0.0);
    for k in 0..d {
        for c in 0..kb {
            let mut plus = w0.clone();
            plus[k][c] += step;
            let mut minus = w0.clone();
            minus[k][c] -= step;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let a = analytic.get(k, c);
            diff += (a - numeric).powi(2);
            norm += a.abs().powi(2) + numeric.abs().powi(2);
        }
    }
    Ok(if norm == 0.0 {
        0.0
    } else {
        diff.sqrt() / norm.sqrt()
    })
}

const WORDS: &[&str] = &[
    "Rome",
    "Kelly",
    "the",
    "and",
    ",",
    ".",
    "U.S.",
    "Wolfsburg",
    "of",
    "data",
    "x",
    "Ab-cd",
];

/// A random aggregation instance compared against the full-table
/// reference.
pub fn check_aggregation<R: Rng>(rng: &mut R) -> Result<(), String> {
    let tokenizer = Tokenizer::default();
    let lexicon = Lexicon::default();
    let (text, tokens) = loop {
        let n = rng.random_range(1..=4);
        let text = (0..n)
            .map(|_| *WORDS.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ");
        let tokens = tokenizer
            .tokenize(&text, TokenizationMode::MentionAgnostic, None)
            .map_err(|e| e.to_string())?;
        if tokens.len() <= 6 {
            break (text, tokens);
        }
    };
    let kb = rng.random_range(1..=5);
    let mut ids: Vec<String> = (0..kb - 1).map(|i| format!("E{i}")).collect();
    let outside = rng.random_range(0..kb);
    ids.insert(outside, "O".to_string());
    let vocab = EntityVocabulary::build(ids.iter(), true).unwrap();
    let k = rng.random_range(1..=kb.min(3));
    // Half-integer scores make ties common.
    let scores: Vec<Vec<f64>> = (0..tokens.len())
        .map(|_| {
            (0..kb)
                .map(|_| rng.random_range(-6..=6) as f64 * 0.5)
                .collect()
        })
        .collect();

    let policy = *[
        CandidatePolicy::None,
        CandidatePolicy::ContextAgnostic,
        CandidatePolicy::ContextAware,
    ]
    .choose(rng)
    .unwrap();
    let aware = policy == CandidatePolicy::ContextAware;
    let mut store = CandidateStore::new(
        if aware {
            StoreKind::ContextAware
        } else {
            StoreKind::ContextAgnostic
        },
        true,
    );
    let mut reference = ReferenceStore {
        context_aware: aware,
        ..ReferenceStore::default()
    };
    let chars: Vec<char> = text.chars().collect();
    let mut pool = ids.clone();
    pool.push("Unknown".to_string());
    for _ in 0..rng.random_range(0..=4) {
        let a = rng.random_range(0..tokens.len());
        let b = rng.random_range(a..tokens.len());
        let (start, end) = (tokens[a].start, tokens[b].end);
        let surface: String = chars[start..end].iter().collect();
        let m = rng.random_range(1..=3);
        let list: Vec<String> = pool.choose_multiple(rng, m).cloned().collect();
        if aware {
            let doc = if rng.random_bool(0.7) { "doc" } else { "other" };
            if reference
                .occurrences
                .iter()
                .any(|o| o.0 == doc && (o.1, o.2) == (start, end))
            {
                continue;
            }
            store
                .insert_occurrence(OccurrenceKey::new(doc, start, end), &surface, list.clone())
                .map_err(|e| e.to_string())?;
            reference
                .occurrences
                .push((doc.to_string(), start, end, surface, list));
        } else {
            if reference.by_surface.iter().any(|(s, _)| *s == surface) {
                continue;
            }
            store
                .insert_surface(&surface, list.clone())
                .map_err(|e| e.to_string())?;
            reference.by_surface.push((surface, list));
        }
    }

    let mut doc = AnnotatedDocument::new("doc", text.clone());
    doc.tokens = tokens.clone();
    let config = AggregationConfig {
        k,
        candidate_policy: policy,
        ..AggregationConfig::default()
    };
    let matrix = LogitMatrix::from_rows(&scores).unwrap();
    let got: Vec<(usize, usize, String, f64)> =
        aggregate(&doc, &matrix, &vocab, &config, Some(&store))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| (p.start, p.end, p.entity, p.score))
            .collect();

    let ref_tokens: Vec<RefToken> = tokens
        .iter()
        .map(|t| RefToken {
            surface: t.surface.clone(),
            start: t.start,
            end: t.end,
            word: t.word_index,
            punctuation: lexicon.is_punctuation(&t.surface),
        })
        .collect();
    let is_function_word = |w: &str| lexicon.is_function_word(w);
    let want = reference_aggregate(&RefInput {
        doc_id: "doc",
        text: &text,
        tokens: &ref_tokens,
        scores: &scores,
        entities: vocab.entries(),
        outside: vocab.outside_index().unwrap(),
        k,
        store: (policy != CandidatePolicy::None).then_some(&reference),
        use_context: aware,
        is_function_word: &is_function_word,
    });
    if got == want {
        Ok(())
    } else {
        Err(format!(
            "text {text:?} k {k} policy {policy:?} scores {scores:?} store {reference:?}\n  got  {got:?}\n  want {want:?}"
        ))
    }
}

/// Mining on a random batch: quota exactness, gold exclusion, and seeded
/// reproducibility. `kb` and `quota` are chosen by the caller.
pub fn check_mining<R: Rng>(
    rng: &mut R,
    kb: usize,
    quota: usize,
    rows: usize,
) -> Result<(), String> {
    let scores = LogitMatrix::from_rows(&random_rows(rng, rows, kb, -5.0, 5.0)).unwrap();
    let gold: Vec<usize> = (0..rows).map(|_| rng.random_range(0..kb)).collect();
    let seed: u64 = rng.random();
    let run = |s| {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(s);
        mine_hard_negatives(&scores, &gold, quota, 8, &mut r)
    };
    let a = run(seed).map_err(|e| e.to_string())?;
    let b = run(seed).map_err(|e| e.to_string())?;
    if a != b {
        return Err("same seed gave different samples".into());
    }
    if a.negatives.len() != quota {
        return Err(format!("{} negatives for quota {quota}", a.negatives.len()));
    }
    let gold_set: BTreeSet<usize> = gold.iter().copied().collect();
    let neg_set: BTreeSet<usize> = a.negatives.iter().copied().collect();
    if neg_set.len() != quota || neg_set.iter().any(|c| gold_set.contains(c) || *c >= kb) {
        return Err("negatives repeat, hit gold, or fall outside the vocabulary".into());
    }
    if a.positives != gold_set.iter().copied().collect::<Vec<_>>() {
        return Err("positives are not the distinct gold columns".into());
    }
    Ok(())
}

/// Random gold and prediction sets for the metric checks.
pub fn random_eval_case<R: Rng>(
    rng: &mut R,
) -> (Vec<AnnotatedDocument>, HashMap<String, Vec<SpanAnnotation>>) {
    let entities = ["A", "B", "C"];
    let mut gold_docs = Vec::new();
    let mut predicted = HashMap::new();
    for d in 0..rng.random_range(1..=4) {
        let id = format!("d{d}");
        let mut gold = Vec::new();
        let mut at = 0;
        for _ in 0..rng.random_range(0..=5) {
            at += rng.random_range(0..3);
            let len = rng.random_range(1..4);
            gold.push(SpanAnnotation::new(
                at,
                at + len,
                *entities.choose(rng).unwrap(),
            ));
            at += len;
        }
        let text = "x".repeat(at + 5);
        let mut pred = Vec::new();
        for g in &gold {
            if !rng.random_bool(0.6) {
                continue;
            }
            if rng.random_bool(0.3) {
                pred.push(SpanAnnotation::new(
                    g.start,
                    g.end,
                    *entities.choose(rng).unwrap(),
                ));
            } else {
                pred.push(g.clone());
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let s = rng.random_range(0..at + 4);
            pred.push(SpanAnnotation::new(
                s,
                s + 1,
                *entities.choose(rng).unwrap(),
            ));
        }
        predicted.insert(id.clone(), pred);
        gold_docs.push(AnnotatedDocument::new(id, text).with_gold(gold));
    }
    (gold_docs, predicted)
}

/// MD scores are never below EL scores, and both match the set oracle.
pub fn check_md_dominates_el<R: Rng>(rng: &mut R) -> Result<(), String> {
    let (gold, predicted) = random_eval_case(rng);
    let el = score(&gold, &predicted, MatchMode::El, None).map_err(|e| e.to_string())?;
    let md = score(&gold, &predicted, MatchMode::Md, None).map_err(|e| e.to_string())?;
    if md.micro_p < el.micro_p || md.micro_r < el.micro_r || md.micro_f1 < el.micro_f1 {
        return Err(format!("MD {md:?} below EL {el:?}"));
    }
    let el_gold: BTreeSet<_> = gold
        .iter()
        .flat_map(|d| d.gold.iter().map(|s| (d.id.clone(), s.clone())))
        .collect();
    let el_pred: BTreeSet<_> = predicted
        .iter()
        .flat_map(|(id, v)| v.iter().map(|s| (id.clone(), s.clone())))
        .collect();
    let (p, r, f) = set_prf(&el_gold, &el_pred);
    if (p - el.micro_p).abs() > 1e-12
        || (r - el.micro_r).abs() > 1e-12
        || (f - el.micro_f1).abs() > 1e-12
    {
        return Err(format!("EL {el:?} differs from set oracle ({p}, {r}, {f})"));
    }
    Ok(())
}

/// A random valid redirect table over a random vocabulary: normalizing is
/// idempotent and leaves span offsets untouched.
pub fn check_redirects<R: Rng>(rng: &mut R) -> Result<(), String> {
    let vocab_ids: Vec<String> = (0..rng.random_range(1..8))
        .map(|i| format!("V{i}"))
        .collect();
    let vocab = EntityVocabulary::build(vocab_ids.iter(), true).unwrap();
    let mut all = vocab_ids.clone();
    all.extend((0..6).map(|i| format!("S{i}")));
    let pairs: Vec<(String, String)> = (0..rng.random_range(0..10))
        .map(|_| {
            (
                all.choose(rng).unwrap().clone(),
                all.choose(rng).unwrap().clone(),
            )
        })
        .collect();
    let (table, _) = RedirectTable::from_pairs(pairs, &vocab);
    let spans: Vec<SpanAnnotation> = (0..rng.random_range(0..8))
        .map(|i| SpanAnnotation::new(i * 3, i * 3 + 2, all.choose(rng).unwrap().clone()))
        .collect();
    let once = table.normalize(&spans);
    let twice = table.normalize(&once);
    if once != twice {
        return Err(format!("not idempotent: {once:?} then {twice:?}"));
    }
    for (a, b) in spans.iter().zip(&once) {
        if (a.start, a.end) != (b.start, b.end) {
            return Err("offsets changed".into());
        }
        if vocab.contains(&a.entity) && a.entity != b.entity {
            return Err(format!("in-vocabulary {} was rewritten", a.entity));
        }
    }
    if once.len() != spans.len() {
        return Err("span count changed".into());
    }
    Ok(())
}

/// A score matrix with every entry equal to `value`.
pub fn constant_rows(rows: usize, cols: usize, value: f64) -> LogitMatrix {
    LogitMatrix::new(Matrix::from_vec(rows, cols, vec![value; rows * cols]).unwrap()).unwrap()
}
