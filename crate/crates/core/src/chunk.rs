//! Sliding-window chunking over subword tokens and reconciliation of
//! per-chunk scores back to document level.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{LogitMatrix, Matrix};
use crate::model::SubwordToken;

pub const DEFAULT_WINDOW: usize = 254;
pub const DEFAULT_OVERLAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub window: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            window: DEFAULT_WINDOW,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

impl ChunkConfig {
    pub fn new(window: usize, overlap: usize) -> Result<Self> {
        let config = ChunkConfig { window, overlap };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window <= self.overlap {
            return Err(Error::Config(format!(
                "chunk window {} must exceed overlap {}",
                self.window, self.overlap
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.window - self.overlap
    }

    /// Token ranges of the chunks covering `n_tokens` tokens. Chunk `k`
    /// starts at `k * stride`; the last chunk may be shorter than the window.
    pub fn ranges(&self, n_tokens: usize) -> Result<Vec<Range<usize>>> {
        self.validate()?;
        let mut ranges = Vec::new();
        let mut start = 0;
        while start < n_tokens {
            let end = (start + self.window).min(n_tokens);
            ranges.push(start..end);
            if end == n_tokens {
                break;
            }
            start += self.stride();
        }
        Ok(ranges)
    }
}

/// A window of consecutive tokens within a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk<'a> {
    pub token_start: usize,
    pub token_end: usize,
    pub tokens: &'a [SubwordToken],
}

impl Chunk<'_> {
    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_start == self.token_end
    }

    pub fn range(&self) -> Range<usize> {
        self.token_start..self.token_end
    }
}

pub fn chunk<'a>(tokens: &'a [SubwordToken], config: &ChunkConfig) -> Result<Vec<Chunk<'a>>> {
    Ok(config
        .ranges(tokens.len())?
        .into_iter()
        .map(|r| Chunk {
            token_start: r.start,
            token_end: r.end,
            tokens: &tokens[r],
        })
        .collect())
}

/// Reassembles document-level scores from per-chunk scores. A token covered
/// by several chunks gets the arithmetic mean of its rows.
pub fn merge_chunk_scores(
    chunks: &[Range<usize>],
    per_chunk: &[LogitMatrix],
) -> Result<LogitMatrix> {
    if chunks.len() != per_chunk.len() {
        return Err(Error::Shape(format!(
            "{} chunks but {} score matrices",
            chunks.len(),
            per_chunk.len()
        )));
    }
    let n = chunks.iter().map(|r| r.end).max().unwrap_or(0);
    let cols = per_chunk.first().map_or(0, |m| m.cols());
    let mut sums = Matrix::zeros(n, cols);
    let mut counts = vec![0u32; n];
    for (range, scores) in chunks.iter().zip(per_chunk) {
        if scores.rows() != range.len() || scores.cols() != cols {
            return Err(Error::Shape(format!(
                "chunk {range:?} expects {}x{cols} scores, got {}x{}",
                range.len(),
                scores.rows(),
                scores.cols()
            )));
        }
        for (offset, token) in range.clone().enumerate() {
            for (acc, v) in sums.row_mut(token).iter_mut().zip(scores.row(offset)) {
                *acc += v;
            }
            counts[token] += 1;
        }
    }
    if let Some(gap) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Shape(format!(
            "token {gap} is not covered by any chunk"
        )));
    }
    for (token, &count) in counts.iter().enumerate() {
        if count > 1 {
            let c = count as f64;
            sums.row_mut(token).iter_mut().for_each(|v| *v /= c);
        }
    }
    LogitMatrix::new(sums)
}
