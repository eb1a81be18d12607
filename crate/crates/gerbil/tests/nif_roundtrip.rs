use proptest::prelude::*;
use spel_core::SpanAnnotation;
use spel_gerbil::{emit_nif, parse_nif, NifDocument, DEFAULT_KB_PREFIX};

/// A text over mixed-width characters plus non-overlapping spans on it.
fn document() -> impl Strategy<Value = (String, Vec<SpanAnnotation>)> {
    proptest::collection::vec(
        prop_oneof![
            Just('a'),
            Just('ü'),
            Just('€'),
            Just('😀'),
            Just(' '),
            Just('"'),
            Just('\n'),
            Just('\\')
        ],
        1..40,
    )
    .prop_flat_map(|chars| {
        let n = chars.len();
        let cuts = proptest::collection::btree_set(0..=n, 0..8);
        (
            Just(chars.into_iter().collect::<String>()),
            cuts,
            proptest::collection::vec("[A-Za-z ]{1,8}", 4),
        )
    })
    .prop_map(|(text, cuts, names)| {
        let cuts: Vec<usize> = cuts.into_iter().collect();
        let spans = cuts
            .chunks_exact(2)
            .enumerate()
            .filter(|(_, c)| c[0] < c[1])
            .map(|(i, c)| SpanAnnotation::new(c[0], c[1], names[i % names.len()].clone()))
            .collect();
        (text, spans)
    })
}

proptest! {
    #[test]
    fn round_trip_preserves_offsets((text, spans) in document()) {
        let doc = NifDocument { context_uri: "http://example.org/doc".into(), is_string: text.clone(), phrases: vec![] };
        let first = emit_nif(&doc, &spans, DEFAULT_KB_PREFIX).unwrap();
        let parsed = parse_nif(&first).unwrap();
        prop_assert_eq!(&parsed.is_string, &text);
        let offsets: Vec<(usize, usize)> = parsed.phrases.iter().map(|p| (p.begin_index, p.end_index)).collect();
        let want: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
        prop_assert_eq!(offsets, want);

        // parse . emit . parse is stable
        let again = parse_nif(&emit_nif(&parsed, &spans, DEFAULT_KB_PREFIX).unwrap()).unwrap();
        prop_assert_eq!(again, parsed);
    }
}
