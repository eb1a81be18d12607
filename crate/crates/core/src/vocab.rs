//! The fixed candidate set: entity identifiers mapped to head columns.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AnnotatedDocument, OUTSIDE};

/// Ordered, duplicate-free list of entity identifiers. Position `i` is head
/// column `i`. At most one entry is the non-entity label [`OUTSIDE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityVocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    outside: Option<usize>,
}

impl EntityVocabulary {
    /// Deduplicates `entity_ids` keeping first occurrences. When
    /// `include_outside` is set and `O` is not already present it is appended.
    pub fn build<I, S>(entity_ids: I, include_outside: bool) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for id in entity_ids {
            let id = id.into();
            if !index.contains_key(&id) {
                index.insert(id.clone(), entries.len());
                entries.push(id);
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if include_outside && !index.contains_key(OUTSIDE) {
            index.insert(OUTSIDE.to_string(), entries.len());
            entries.push(OUTSIDE.to_string());
        }
        let outside = index.get(OUTSIDE).copied();
        Ok(EntityVocabulary {
            entries,
            index,
            outside,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, entity: &str) -> Option<usize> {
        self.index.get(entity).copied()
    }

    pub fn id_of(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(String::as_str)
    }

    pub fn contains(&self, entity: &str) -> bool {
        self.index.contains_key(entity)
    }

    pub fn outside_index(&self) -> Option<usize> {
        self.outside
    }

    pub fn is_outside(&self, index: usize) -> bool {
        self.outside == Some(index)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Column index for `entity`, falling back to the `O` column for
    /// identifiers outside the vocabulary.
    pub fn index_or_outside(&self, entity: &str) -> Option<usize> {
        self.index_of(entity).or(self.outside)
    }

    /// Gold column for every token of `doc`: the entity of the gold span the
    /// token overlaps, or `O` when there is none or the entity is not in the
    /// vocabulary.
    pub fn token_labels(&self, doc: &AnnotatedDocument) -> Result<Vec<usize>> {
        let outside = self.outside.ok_or_else(|| {
            Error::Config("vocabulary has no O entry; token labels need one".to_string())
        })?;
        let mut gold: Vec<_> = doc.gold.iter().filter(|s| !s.is_outside()).collect();
        gold.sort();
        let mut labels = Vec::with_capacity(doc.tokens.len());
        let mut next = 0;
        for token in &doc.tokens {
            while next < gold.len() && gold[next].end <= token.start {
                next += 1;
            }
            let label = match gold.get(next) {
                Some(span) if span.start < token.end => self.index_or_outside(&span.entity),
                _ => None,
            };
            labels.push(label.unwrap_or(outside));
        }
        Ok(labels)
    }

    /// Parses the vocabulary file format: one identifier per line, with an
    /// optional `#O=<index>` header naming the column of `O`.
    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let mut lines = content.lines().enumerate().peekable();
        let mut declared_outside = None;
        if let Some((_, first)) = lines.peek() {
            if let Some(value) = first.strip_prefix("#O=") {
                let idx = value
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, 1, format!("bad O header {first:?}")))?;
                declared_outside = Some(idx);
                lines.next();
            }
        }
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for (n, line) in lines {
            let id = line.trim_end_matches('\r');
            if id.is_empty() {
                return Err(Error::parse(path, n + 1, "empty entity identifier"));
            }
            if index.insert(id.to_string(), entries.len()).is_some() {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("duplicate entity {id:?}"),
                ));
            }
            entries.push(id.to_string());
        }
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let outside = index.get(OUTSIDE).copied();
        if let Some(declared) = declared_outside {
            if outside != Some(declared) {
                return Err(Error::parse(
                    path,
                    1,
                    format!("header declares O at column {declared} but that entry is not O"),
                ));
            }
        }
        Ok(EntityVocabulary {
            entries,
            index,
            outside,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, path)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        if let Some(o) = self.outside {
            let _ = writeln!(out, "#O={o}");
        }
        for entry in &self.entries {
            out.push_str(entry);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dedups_and_appends_outside() {
        let v = EntityVocabulary::build(["A", "B", "A"], true).unwrap();
        assert_eq!(v.entries(), ["A", "B", "O"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.outside_index(), Some(2));
    }

    #[test]
    fn empty_input_is_an_error() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            EntityVocabulary::build(empty, true),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn existing_outside_is_not_duplicated() {
        let v = EntityVocabulary::build(["O", "A"], true).unwrap();
        assert_eq!(v.entries(), ["O", "A"]);
        assert_eq!(v.outside_index(), Some(0));
    }

    #[test]
    fn aida_sized_vocabulary() {
        let ids: Vec<String> = (0..5599).map(|i| format!("Entity_{i}")).collect();
        let v = EntityVocabulary::build(ids, true).unwrap();
        assert_eq!(v.len(), 5600);
        let reloaded = EntityVocabulary::parse(&v.to_file_string(), Path::new("aida.txt")).unwrap();
        assert_eq!(reloaded.len(), 5600);
        assert_eq!(reloaded.outside_index(), Some(5599));
    }

    #[test]
    fn file_header_must_point_at_outside() {
        let err = EntityVocabulary::parse("#O=0\nA\nO\n", Path::new("v.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let ok = EntityVocabulary::parse("#O=1\nA\nO\n", Path::new("v.txt")).unwrap();
        assert_eq!(ok.outside_index(), Some(1));
    }

    #[test]
    fn file_duplicates_name_the_line() {
        let err = EntityVocabulary::parse("A\nB\nA\n", Path::new("v.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn token_labels_follow_gold_spans() {
        use crate::model::{SpanAnnotation, SubwordToken};
        let vocab = EntityVocabulary::build(["Grace_Kelly"], true).unwrap();
        let mut doc = AnnotatedDocument::new("d", "Grace Kelly and Monaco").with_gold(vec![
            SpanAnnotation::new(0, 11, "Grace_Kelly"),
            SpanAnnotation::new(16, 22, "Monaco"),
        ]);
        doc.tokens = [
            (0, 4),
            (4, 5),
            (6, 10),
            (10, 11),
            (12, 15),
            (16, 20),
            (20, 22),
        ]
        .iter()
        .map(|&(s, e)| SubwordToken {
            surface: doc.text.chars().skip(s).take(e - s).collect(),
            start: s,
            end: e,
            word_index: 0,
            is_punctuation: false,
            is_function_word: false,
        })
        .collect();
        assert_eq!(vocab.token_labels(&doc).unwrap(), vec![0, 0, 0, 0, 1, 1, 1]);
    }

    proptest! {
        #[test]
        fn index_and_id_are_inverse(ids in prop::collection::vec("[A-Za-z_]{1,6}", 1..40)) {
            let v = EntityVocabulary::build(ids, true).unwrap();
            for i in 0..v.len() {
                prop_assert_eq!(v.index_of(v.id_of(i).unwrap()), Some(i));
            }
            let back = EntityVocabulary::parse(&v.to_file_string(), Path::new("v")).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
