use std::collections::BTreeSet;

/// Binary cross-entropy over the selected columns, written out term by term:
/// mean over the selected columns of each row, then mean over rows.
pub fn scalar_loss(scores: &[Vec<f64>], gold: &[usize], selected: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &g) in scores.iter().zip(gold) {
        let mut row_loss = 0.0;
        for &j in selected {
            let p = 1.0 / (1.0 + (-row[j]).exp());
            let a = if j == g { 1.0 } else { 0.0 };
            row_loss += -(a * p.ln() + (1.0 - a) * (1.0 - p).ln());
        }
        total += row_loss / selected.len() as f64;
    }
    total / scores.len() as f64
}

/// Candidate lists as plain association lists. A context-aware store holds
/// only occurrence entries `(doc, start, end, surface, list)`; looking up a
/// surface in it unions the lists of every occurrence with that surface.
#[derive(Debug, Clone, Default)]
pub struct ReferenceStore {
    pub context_aware: bool,
    pub by_surface: Vec<(String, Vec<String>)>,
    pub occurrences: Vec<(String, usize, usize, String, Vec<String>)>,
}

impl ReferenceStore {
    fn lookup(
        &self,
        doc: &str,
        surface: &str,
        start: usize,
        end: usize,
        use_context: bool,
    ) -> Option<Vec<String>> {
        let surface = surface.trim();
        if !self.context_aware {
            return self
                .by_surface
                .iter()
                .find(|(s, _)| s == surface)
                .map(|(_, l)| l.clone());
        }
        if use_context {
            if let Some(o) = self
                .occurrences
                .iter()
                .find(|o| o.0 == doc && o.1 == start && o.2 == end)
            {
                return Some(o.4.clone());
            }
        }
        let union: Vec<String> = self
            .occurrences
            .iter()
            .filter(|o| o.3.trim() == surface)
            .flat_map(|o| o.4.iter().cloned())
            .collect();
        (!union.is_empty()).then_some(union)
    }
}

/// One subword as the reference aggregator sees it.
#[derive(Debug, Clone)]
pub struct RefToken {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub word: usize,
    pub punctuation: bool,
}

pub struct RefInput<'a> {
    pub doc_id: &'a str,
    pub text: &'a str,
    pub tokens: &'a [RefToken],
    /// Raw scores, one row per token.
    pub scores: &'a [Vec<f64>],
    pub entities: &'a [String],
    pub outside: usize,
    pub k: usize,
    pub store: Option<&'a ReferenceStore>,
    pub use_context: bool,
    pub is_function_word: &'a dyn Fn(&str) -> bool,
}

/// Same branch convention as the crate under test so that results can be
/// compared bit for bit.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        x.exp() / (1.0 + x.exp())
    }
}

fn mean_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out.iter().map(|v| v / rows.len() as f64).collect()
}

/// First index of the maximum over `allowed` columns.
fn best(row: &[f64], allowed: &[bool]) -> Option<usize> {
    let mut b: Option<usize> = None;
    for j in 0..row.len() {
        if allowed[j] && b.is_none_or(|i| row[j] > row[i]) {
            b = Some(j);
        }
    }
    b
}

/// Full-table aggregation. Every subword gets a probability for every
/// entity; entities outside its top `k` (by raw score, lower column first
/// on ties) are zeroed. Words average their subwords' rows, runs of words
/// with the same best entity average the word rows, candidate lists keep
/// the listed entities that any subword ranked, and lone punctuation
/// subwords or lone function words are dropped along with `O` spans.
///
/// Returns `(start, end, entity, score)`.
pub fn reference_aggregate(input: &RefInput<'_>) -> Vec<(usize, usize, String, f64)> {
    let kb = input.entities.len();
    let masked: Vec<Vec<f64>> = input
        .scores
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..kb).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            let keep: BTreeSet<usize> = order[..input.k].iter().copied().collect();
            (0..kb)
                .map(|j| {
                    if keep.contains(&j) {
                        sigmoid(row[j])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    // words: (first token, last token + 1)
    let mut words: Vec<(usize, usize)> = Vec::new();
    for (i, t) in input.tokens.iter().enumerate() {
        match words.last_mut() {
            Some(w) if input.tokens[w.0].word == t.word => w.1 = i + 1,
            _ => words.push((i, i + 1)),
        }
    }
    let word_rows: Vec<Vec<f64>> = words
        .iter()
        .map(|&(a, b)| mean_rows(&masked[a..b], kb))
        .collect();
    let word_top: Vec<usize> = word_rows
        .iter()
        .map(|r| best(r, &r.iter().map(|&v| v > 0.0).collect::<Vec<_>>()).unwrap())
        .collect();

    let chars: Vec<char> = input.text.chars().collect();
    let mut out = Vec::new();
    let mut w = 0;
    while w < words.len() {
        let mut v = w + 1;
        while v < words.len() && word_top[v] == word_top[w] {
            v += 1;
        }
        let span_row = mean_rows(&word_rows[w..v], kb);
        let mut top = word_top[w];
        let start = input.tokens[words[w].0].start;
        let end = input.tokens[words[v - 1].1 - 1].end;
        if top != input.outside {
            if let Some(store) = input.store {
                let surface: String = chars[start..end].iter().collect();
                if let Some(list) =
                    store.lookup(input.doc_id, &surface, start, end, input.use_context)
                {
                    let allowed: Vec<bool> = (0..kb)
                        .map(|j| span_row[j] > 0.0 && list.contains(&input.entities[j]))
                        .collect();
                    top = best(&span_row, &allowed).unwrap_or(input.outside);
                }
            }
        }
        let single_punct = words[v - 1].1 - words[w].0 == 1 && input.tokens[words[w].0].punctuation;
        let single_function = v - w == 1 && {
            let word: String = input.tokens[words[w].0..words[w].1]
                .iter()
                .map(|t| t.surface.as_str())
                .collect();
            (input.is_function_word)(&word)
        };
        if top != input.outside && !single_punct && !single_function {
            out.push((start, end, input.entities[top].clone(), span_row[top]));
        }
        w = v;
    }
    out
}

/// Micro precision, recall and F1 from sets of matched keys.
pub fn set_prf<T: Ord + Clone>(gold: &BTreeSet<T>, predicted: &BTreeSet<T>) -> (f64, f64, f64) {
    let tp = gold.intersection(predicted).count() as f64;
    let p = if predicted.is_empty() {
        0.0
    } else {
        tp / predicted.len() as f64
    };
    let r = if gold.is_empty() {
        0.0
    } else {
        tp / gold.len() as f64
    };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}
