use std::collections::HashMap;
use std::sync::Arc;

use spel_core::aggregate::CandidatePolicy;
use spel_core::eval::{score_el, score_md};
use spel_core::{
    CandidateStore, EntityVocabulary, Linker, MockScores, OccurrenceKey, Prediction, StoreKind,
};
use spel_testkit::synth;

fn setup(
    n_docs: usize,
) -> (
    Vec<synth::SyntheticEntity>,
    Vec<spel_core::AnnotatedDocument>,
    Linker,
) {
    let entities = synth::entities(40, 1);
    let docs = synth::corpus(n_docs, &entities, 2);
    let vocab =
        Arc::new(EntityVocabulary::build(entities.iter().map(|e| e.id.as_str()), true).unwrap());
    let mock = Arc::new(MockScores::new(vocab.clone(), 0.9).unwrap());
    (entities, docs, Linker::new(vocab, mock).unwrap())
}

fn link_all(
    linker: &Linker,
    docs: &[spel_core::AnnotatedDocument],
) -> HashMap<String, Vec<spel_core::SpanAnnotation>> {
    docs.iter()
        .map(|d| {
            (
                d.id.clone(),
                linker
                    .link(d)
                    .unwrap()
                    .iter()
                    .map(Prediction::annotation)
                    .collect(),
            )
        })
        .collect()
}

#[test]
fn mock_oracle_gives_perfect_scores() {
    let (_, docs, linker) = setup(100);
    let predicted = link_all(&linker, &docs);
    let el = score_el(&docs, &predicted, Some(&linker.vocab)).unwrap();
    let md = score_md(&docs, &predicted, Some(&linker.vocab)).unwrap();
    assert!(el.counts.tp > 50);
    assert_eq!((el.micro_f1, md.micro_f1), (1.0, 1.0));
}

#[test]
fn removing_gold_from_candidate_lists_costs_one_true_positive_each() {
    let (entities, docs, mut linker) = setup(100);
    // Every gold occurrence gets its own list: the gold entity, except for
    // the first mention of every third document, which gets a wrong one.
    let mut store = CandidateStore::new(StoreKind::ContextAware, true);
    let mut removed = 0;
    for (d, doc) in docs.iter().enumerate() {
        for (i, g) in doc.gold.iter().enumerate() {
            let surface: String = doc
                .text
                .chars()
                .skip(g.start)
                .take(g.end - g.start)
                .collect();
            let list = if d % 3 == 0 && i == 0 {
                removed += 1;
                vec![entities
                    .iter()
                    .find(|e| e.id != g.entity)
                    .unwrap()
                    .id
                    .clone()]
            } else {
                vec![g.entity.clone()]
            };
            store
                .insert_occurrence(
                    OccurrenceKey::new(doc.id.clone(), g.start, g.end),
                    &surface,
                    list,
                )
                .unwrap();
        }
    }
    linker.candidates = Some(Arc::new(store));
    linker.aggregation.candidate_policy = CandidatePolicy::ContextAware;
    let base = score_el(&docs, &link_all(&setup(100).2, &docs), None).unwrap();
    let pruned = score_el(&docs, &link_all(&linker, &docs), None).unwrap();
    assert!(removed > 10);
    assert_eq!(base.counts.tp - pruned.counts.tp, removed);
}
