use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spel_core::{AnnotatedDocument, SpanAnnotation};

const FILLER: &[&str] = &[
    "river",
    "stone",
    "quietly",
    "spoke",
    "visited",
    "market",
    "report",
    "season",
    "yesterday",
    "council",
    "signed",
    "northern",
    "players",
    "town",
    "plans",
    "early",
    "won",
    "rejected",
    "meeting",
    "talks",
    ",",
];

const SYLLABLES: &[&str] = &[
    "kar", "vel", "mon", "tis", "dra", "lu", "pen", "zor", "bel", "qua", "ri", "sto",
];

/// A synthetic entity: a knowledge-base id and the surface used in text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticEntity {
    pub id: String,
    pub surface: String,
}

fn name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    s[..1].make_ascii_uppercase();
    s
}

/// `count` entities with distinct ids and distinct surfaces of one or two
/// capitalized words.
pub fn entities(count: usize, seed: u64) -> Vec<SyntheticEntity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let surface = if rng.random_bool(0.4) {
            format!("{} {}", name(&mut rng), name(&mut rng))
        } else {
            name(&mut rng)
        };
        if seen.insert(surface.clone()) {
            out.push(SyntheticEntity {
                id: format!("{}_{}", surface.replace(' ', "_"), out.len()),
                surface,
            });
        }
    }
    out
}

/// Documents of filler words with entity mentions. Mentions cover whole
/// words and are always separated by at least one filler word, so no two
/// gold spans touch.
pub fn corpus(n_docs: usize, entities: &[SyntheticEntity], seed: u64) -> Vec<AnnotatedDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|d| {
            let mut text = String::new();
            let mut len = 0;
            let mut gold = Vec::new();
            let words = rng.random_range(6..=24);
            let mut last_was_mention = true;
            for _ in 0..words {
                if !text.is_empty() {
                    text.push(' ');
                    len += 1;
                }
                if !last_was_mention && rng.random_bool(0.35) {
                    let e = entities.choose(&mut rng).unwrap();
                    let n = e.surface.chars().count();
                    gold.push(SpanAnnotation::new(len, len + n, e.id.clone()));
                    text.push_str(&e.surface);
                    len += n;
                    last_was_mention = true;
                } else {
                    let w = FILLER.choose(&mut rng).unwrap();
                    text.push_str(w);
                    len += w.chars().count();
                    last_was_mention = false;
                }
            }
            AnnotatedDocument::new(format!("doc{d:04}"), text).with_gold(gold)
        })
        .collect()
}
