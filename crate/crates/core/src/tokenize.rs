//! Subword tokenization with optional forced mention boundaries.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::model::{SpanAnnotation, SubwordToken};

/// Splits a whitespace-free segment of text into subword pieces.
///
/// Implementations return the length in chars of each piece, in order. The
/// lengths must be positive and sum to the segment's char length. The same
/// segment must always produce the same pieces.
pub trait SubwordSplitter: Send + Sync {
    fn split(&self, segment: &str) -> Vec<usize>;
}

/// Reference splitter: punctuation chars are singleton pieces, every other
/// run of chars is cut into consecutive pieces of at most `max_piece` chars.
#[derive(Debug, Clone)]
pub struct ReferenceSplitter {
    max_piece: usize,
    lexicon: Lexicon,
}

impl ReferenceSplitter {
    pub fn new(max_piece: usize, lexicon: Lexicon) -> Self {
        assert!(max_piece > 0, "max_piece must be positive");
        ReferenceSplitter { max_piece, lexicon }
    }
}

impl Default for ReferenceSplitter {
    fn default() -> Self {
        ReferenceSplitter::new(4, Lexicon::default())
    }
}

impl SubwordSplitter for ReferenceSplitter {
    fn split(&self, segment: &str) -> Vec<usize> {
        let mut pieces = Vec::new();
        let mut run = 0;
        for c in segment.chars() {
            if self.lexicon.is_punctuation_char(c) {
                if run > 0 {
                    pieces.push(run);
                    run = 0;
                }
                pieces.push(1);
            } else {
                run += 1;
                if run == self.max_piece {
                    pieces.push(run);
                    run = 0;
                }
            }
        }
        if run > 0 {
            pieces.push(run);
        }
        pieces
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizationMode {
    /// Token boundaries are forced at every mention start and end.
    MentionAware,
    /// Mentions are ignored; this is the inference-time tokenization.
    #[default]
    MentionAgnostic,
}

#[derive(Clone)]
pub struct Tokenizer {
    splitter: Arc<dyn SubwordSplitter>,
    lexicon: Lexicon,
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer").finish_non_exhaustive()
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::reference(Lexicon::default())
    }
}

impl Tokenizer {
    pub fn new(splitter: Arc<dyn SubwordSplitter>, lexicon: Lexicon) -> Self {
        Tokenizer { splitter, lexicon }
    }

    /// Tokenizer backed by [`ReferenceSplitter`] with 4-char pieces.
    pub fn reference(lexicon: Lexicon) -> Self {
        Tokenizer {
            splitter: Arc::new(ReferenceSplitter::new(4, lexicon.clone())),
            lexicon,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Tokenizes `text`. Words are maximal runs of non-whitespace chars and
    /// number the tokens' `word_index`. In [`TokenizationMode::MentionAware`]
    /// mode each word is additionally cut at every mention boundary before
    /// the splitter sees it.
    pub fn tokenize(
        &self,
        text: &str,
        mode: TokenizationMode,
        mentions: Option<&[SpanAnnotation]>,
    ) -> Result<Vec<SubwordToken>> {
        let chars: Vec<char> = text.chars().collect();
        let mut forced = BTreeSet::new();
        if mode == TokenizationMode::MentionAware {
            let mentions = mentions.ok_or_else(|| {
                Error::Config("mention-aware tokenization requires mentions".to_string())
            })?;
            for m in mentions {
                m.check_bounds(chars.len())?;
                forced.insert(m.start);
                forced.insert(m.end);
            }
        }

        let mut tokens = Vec::new();
        let mut word_index = 0;
        let mut pos = 0;
        while pos < chars.len() {
            if chars[pos].is_whitespace() {
                pos += 1;
                continue;
            }
            let word_start = pos;
            while pos < chars.len() && !chars[pos].is_whitespace() {
                pos += 1;
            }
            let word_end = pos;
            let word: String = chars[word_start..word_end].iter().collect();
            let is_function_word = self.lexicon.is_function_word(&word);

            let mut cuts: Vec<usize> = forced.range(word_start + 1..word_end).copied().collect();
            cuts.push(word_end);
            let mut seg_start = word_start;
            for seg_end in cuts {
                let segment: String = chars[seg_start..seg_end].iter().collect();
                let pieces = self.splitter.split(&segment);
                if pieces.iter().any(|&p| p == 0)
                    || pieces.iter().sum::<usize>() != seg_end - seg_start
                {
                    return Err(Error::Config(format!(
                        "splitter produced pieces {pieces:?} for segment {segment:?}"
                    )));
                }
                let mut start = seg_start;
                for len in pieces {
                    let surface: String = chars[start..start + len].iter().collect();
                    tokens.push(SubwordToken {
                        is_punctuation: self.lexicon.is_punctuation(&surface),
                        is_function_word,
                        surface,
                        start,
                        end: start + len,
                        word_index,
                    });
                    start += len;
                }
                seg_start = seg_end;
            }
            word_index += 1;
        }
        Ok(tokens)
    }
}
