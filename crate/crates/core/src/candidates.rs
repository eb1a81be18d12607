//! Mention-specific candidate stores and redirect normalization.
//!
//! Store files are tab-separated, one entry per line:
//!
//! ```text
//! context-agnostic:  surface<TAB>entity1,entity2,...
//! context-aware:     doc_id<TAB>start<TAB>end<TAB>surface<TAB>entity1,entity2,...
//! ```
//!
//! A literal comma or backslash inside an entity identifier is escaped as
//! `\,` or `\\`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpanAnnotation;
use crate::vocab::EntityVocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    ContextAgnostic,
    ContextAware,
}

/// Identifies one mention occurrence: document id and char span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccurrenceKey {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl OccurrenceKey {
    pub fn new(doc_id: impl Into<String>, start: usize, end: usize) -> Self {
        OccurrenceKey {
            doc_id: doc_id.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Occurrence {
    surface: String,
    entities: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreStats {
    pub entries: usize,
    pub mean_list_len: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateStore {
    kind: StoreKind,
    case_sensitive: bool,
    /// Surface lists. For a context-aware store this is the surface-level
    /// union used as a fallback.
    by_surface: HashMap<String, Vec<String>>,
    by_occurrence: HashMap<OccurrenceKey, Occurrence>,
    /// Occurrence keys in insertion order, for first-seen unions.
    occurrence_order: Vec<OccurrenceKey>,
}

fn push_unique(list: &mut Vec<String>, entities: &[String]) {
    for e in entities {
        if !list.contains(e) {
            list.push(e.clone());
        }
    }
}

fn split_entities(field: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(next) => current.push(next),
                None => current.push('\\'),
            },
            ',' => out.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    out.push(current);
    out.into_iter()
        .map(|e| e.trim().to_string())
        .filter(|e| !e.is_empty())
        .collect()
}

fn join_entities(entities: &[String]) -> String {
    entities
        .iter()
        .map(|e| e.replace('\\', "\\\\").replace(',', "\\,"))
        .collect::<Vec<_>>()
        .join(",")
}

impl CandidateStore {
    pub fn new(kind: StoreKind, case_sensitive: bool) -> Self {
        CandidateStore {
            kind,
            case_sensitive,
            by_surface: HashMap::new(),
            by_occurrence: HashMap::new(),
            occurrence_order: Vec::new(),
        }
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    /// Store-side key normalization: outer whitespace trimmed, lowercased
    /// unless the store is case-sensitive.
    pub fn normalize_surface(&self, surface: &str) -> String {
        let trimmed = surface.trim();
        if self.case_sensitive {
            trimmed.to_string()
        } else {
            trimmed.to_lowercase()
        }
    }

    /// Adds a surface entry to a context-agnostic store.
    pub fn insert_surface(&mut self, surface: &str, entities: Vec<String>) -> Result<()> {
        if self.kind != StoreKind::ContextAgnostic {
            return Err(Error::Config(
                "surface entries need a context-agnostic store".to_string(),
            ));
        }
        if entities.is_empty() {
            return Err(Error::Config(format!(
                "empty candidate list for {surface:?}"
            )));
        }
        let key = self.normalize_surface(surface);
        if self.by_surface.contains_key(&key) {
            return Err(Error::Config(format!("duplicate surface {surface:?}")));
        }
        self.by_surface.insert(key, entities);
        Ok(())
    }

    /// Adds an occurrence entry to a context-aware store; its entities also
    /// join the surface fallback list.
    pub fn insert_occurrence(
        &mut self,
        key: OccurrenceKey,
        surface: &str,
        entities: Vec<String>,
    ) -> Result<()> {
        if self.kind != StoreKind::ContextAware {
            return Err(Error::Config(
                "occurrence entries need a context-aware store".to_string(),
            ));
        }
        if entities.is_empty() {
            return Err(Error::Config(format!(
                "empty candidate list for {surface:?}"
            )));
        }
        if self.by_occurrence.contains_key(&key) {
            return Err(Error::Config(format!(
                "duplicate occurrence {}:[{}, {})",
                key.doc_id, key.start, key.end
            )));
        }
        let norm = self.normalize_surface(surface);
        push_unique(self.by_surface.entry(norm).or_default(), &entities);
        self.occurrence_order.push(key.clone());
        self.by_occurrence.insert(
            key,
            Occurrence {
                surface: surface.to_string(),
                entities,
            },
        );
        Ok(())
    }

    pub fn parse(
        content: &str,
        path: &Path,
        kind: StoreKind,
        case_sensitive: bool,
    ) -> Result<Self> {
        let mut store = CandidateStore::new(kind, case_sensitive);
        for (n, raw) in content.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let result = match (kind, fields.as_slice()) {
                (StoreKind::ContextAgnostic, [surface, entities]) => {
                    store.insert_surface(surface, split_entities(entities))
                }
                (StoreKind::ContextAware, [doc, start, end, surface, entities]) => {
                    let offsets = start.parse::<usize>().ok().zip(end.parse::<usize>().ok());
                    match offsets {
                        Some((s, e)) if s < e => store.insert_occurrence(
                            OccurrenceKey::new(*doc, s, e),
                            surface,
                            split_entities(entities),
                        ),
                        _ => Err(Error::Config(format!("bad offsets {start:?}, {end:?}"))),
                    }
                }
                _ => Err(Error::Config(format!(
                    "expected {} tab-separated fields, found {}",
                    if kind == StoreKind::ContextAgnostic {
                        2
                    } else {
                        5
                    },
                    fields.len()
                ))),
            };
            result.map_err(|e| match e {
                Error::Config(message) => Error::parse(path, line_no, message),
                other => other,
            })?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>, kind: StoreKind, case_sensitive: bool) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, path, kind, case_sensitive)
    }

    /// Serializes in the store's file format, sorted by key.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        match self.kind {
            StoreKind::ContextAgnostic => {
                let sorted: BTreeMap<_, _> = self.by_surface.iter().collect();
                for (surface, entities) in sorted {
                    out.push_str(&format!("{surface}\t{}\n", join_entities(entities)));
                }
            }
            StoreKind::ContextAware => {
                let sorted: BTreeMap<_, _> = self.by_occurrence.iter().collect();
                for (key, occ) in sorted {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        key.doc_id,
                        key.start,
                        key.end,
                        occ.surface,
                        join_entities(&occ.entities)
                    ));
                }
            }
        }
        out
    }

    pub fn stats(&self) -> StoreStats {
        let lists: Vec<usize> = match self.kind {
            StoreKind::ContextAgnostic => self.by_surface.values().map(Vec::len).collect(),
            StoreKind::ContextAware => self
                .by_occurrence
                .values()
                .map(|o| o.entities.len())
                .collect(),
        };
        StoreStats {
            entries: lists.len(),
            mean_list_len: if lists.is_empty() {
                0.0
            } else {
                lists.iter().sum::<usize>() as f64 / lists.len() as f64
            },
        }
    }

    pub fn len(&self) -> usize {
        self.stats().entries
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidates for a mention. A context-aware store consults the
    /// occurrence key first and falls back to the surface; a context-agnostic
    /// store only consults the surface.
    pub fn lookup(&self, surface: &str, context: Option<&OccurrenceKey>) -> Option<&[String]> {
        if self.kind == StoreKind::ContextAware {
            if let Some(occ) = context.and_then(|k| self.by_occurrence.get(k)) {
                return Some(&occ.entities);
            }
        }
        self.by_surface
            .get(&self.normalize_surface(surface))
            .map(Vec::as_slice)
    }

    /// Collapses a context-aware store to surface keys; each surface gets the
    /// union of its occurrences' lists in first-seen order. A context-agnostic
    /// store is returned unchanged.
    pub fn project_context_agnostic(&self) -> CandidateStore {
        let mut projected = CandidateStore::new(StoreKind::ContextAgnostic, self.case_sensitive);
        match self.kind {
            StoreKind::ContextAgnostic => projected.by_surface = self.by_surface.clone(),
            StoreKind::ContextAware => {
                for key in &self.occurrence_order {
                    let occ = &self.by_occurrence[key];
                    let norm = projected.normalize_surface(&occ.surface);
                    push_unique(projected.by_surface.entry(norm).or_default(), &occ.entities);
                }
            }
        }
        projected
    }
}

/// Single-hop identifier rewrites `u -> v` where `u` is outside the fixed
/// vocabulary and `v` inside it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RedirectTable {
    map: HashMap<String, String>,
}

impl RedirectTable {
    /// Keeps only pairs with `u` outside and `v` inside `vocab`; the first
    /// pair wins for a repeated `u`. Returns the table and the number of
    /// pairs dropped.
    pub fn from_pairs<I>(pairs: I, vocab: &EntityVocabulary) -> (Self, usize)
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map = HashMap::new();
        let mut dropped = 0;
        for (u, v) in pairs {
            if vocab.contains(&u) || !vocab.contains(&v) || map.contains_key(&u) {
                dropped += 1;
                continue;
            }
            map.insert(u, v);
        }
        (RedirectTable { map }, dropped)
    }

    /// Reads `u<TAB>v` lines and filters them with [`RedirectTable::from_pairs`].
    pub fn load(path: impl AsRef<Path>, vocab: &EntityVocabulary) -> Result<(Self, usize)> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (n, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [u, v] if !u.is_empty() && !v.is_empty() => {
                    pairs.push((u.to_string(), v.to_string()))
                }
                _ => return Err(Error::parse(path, n + 1, "expected `source<TAB>target`")),
            }
        }
        Ok(Self::from_pairs(pairs, vocab))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn resolve<'a>(&'a self, entity: &'a str) -> &'a str {
        self.map.get(entity).map_or(entity, String::as_str)
    }

    pub fn normalize(&self, annotations: &[SpanAnnotation]) -> Vec<SpanAnnotation> {
        annotations
            .iter()
            .map(|a| SpanAnnotation::new(a.start, a.end, self.resolve(&a.entity)))
            .collect()
    }

    pub fn normalize_in_place(&self, annotations: &mut [SpanAnnotation]) {
        for a in annotations {
            if let Some(v) = self.map.get(&a.entity) {
                a.entity = v.clone();
            }
        }
    }
}

pub fn normalize_redirects(
    annotations: &[SpanAnnotation],
    table: &RedirectTable,
) -> Vec<SpanAnnotation> {
    table.normalize(annotations)
}
