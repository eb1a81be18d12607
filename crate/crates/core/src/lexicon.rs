//! Punctuation set and function-word stop-list.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_FUNCTION_WORDS: &[&str] = &[
    // determiners
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no", "all",
    "both", "either", "neither", "my", "your", "his", "her", "its", "our", "their",
    // conjunctions
    "and", "or", "but", "nor", "so", "yet", "although", "because", "if", "unless", "while",
    "whereas", "whether", // prepositions
    "of", "in", "on", "at", "by", "to", "from", "with", "without", "about", "above", "below",
    "under", "over", "into", "onto", "upon", "through", "during", "before", "after", "between",
    "among", "against", "across", "along", "around", "behind", "beyond", "despite", "except",
    "inside", "outside", "near", "off", "out", "since", "till", "until", "toward", "towards",
    "via", "within", "per", "than", "as", "for", // auxiliaries
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "have", "has",
    "had", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];

const EXTRA_PUNCTUATION: &str = "¡¿«»‐‑‒–—―‘’‚‛“”„‟†‡•…‰′″‹›⁄、。，：；！？（）【】「」";

/// Decides which subwords are punctuation and which words are function
/// words. Function-word matching is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    punctuation: HashSet<char>,
    function_words: HashSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            punctuation: default_punctuation(),
            function_words: DEFAULT_FUNCTION_WORDS
                .iter()
                .map(|w| w.to_string())
                .collect(),
        }
    }
}

fn default_punctuation() -> HashSet<char> {
    (0u8..128)
        .map(char::from)
        .filter(char::is_ascii_punctuation)
        .chain(EXTRA_PUNCTUATION.chars())
        .collect()
}

impl Lexicon {
    pub fn new<I, S>(function_words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Lexicon {
            punctuation: default_punctuation(),
            function_words: function_words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn with_punctuation(mut self, chars: impl IntoIterator<Item = char>) -> Self {
        self.punctuation = chars.into_iter().collect();
        self
    }

    /// Reads a stop-list: one word per line, blank lines and `#` comments
    /// ignored.
    pub fn load_function_words(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn is_punctuation_char(&self, c: char) -> bool {
        self.punctuation.contains(&c)
    }

    /// True when `surface` is non-empty and made only of punctuation.
    pub fn is_punctuation(&self, surface: &str) -> bool {
        !surface.is_empty() && surface.chars().all(|c| self.is_punctuation_char(c))
    }

    pub fn is_function_word(&self, word: &str) -> bool {
        self.function_words.contains(&word.to_lowercase())
    }
}
