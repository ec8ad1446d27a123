//! Sliding-window chunking of a transcript into whole-sentence chunks.
//!
//! Windows are measured in tokens or sentences and may overlap. Token-mode
//! windows snap to sentence boundaries: sentences are added greedily while
//! the window budget lasts, and a single sentence longer than the window
//! forms its own chunk.

use serde::{Deserialize, Serialize};

use crate::textproc::Document;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkUnit {
    Tokens,
    Sentences,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingConfig {
    pub unit: ChunkUnit,
    pub window: usize,
    pub stride: usize,
}

impl ChunkingConfig {
    pub fn new(unit: ChunkUnit, window: usize, stride: usize) -> Result<ChunkingConfig> {
        let cfg = ChunkingConfig {
            unit,
            window,
            stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::InvalidChunkingConfig(
                "window and stride must be positive".into(),
            ));
        }
        if self.stride > self.window {
            return Err(Error::StrideExceedsWindow {
                window: self.window,
                stride: self.stride,
            });
        }
        Ok(())
    }

    /// Stride equal to window means consecutive chunks share nothing.
    pub fn is_non_overlapping(&self) -> bool {
        self.stride == self.window
    }
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            unit: ChunkUnit::Tokens,
            window: 256,
            stride: 128,
        }
    }
}

/// A contiguous whole-sentence span of the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// 0-based chunk index.
    pub index: usize,
    /// `(first_sentence, last_sentence_exclusive)`.
    pub sentence_range: (usize, usize),
    /// `(first_token, last_token_exclusive)` into the transcript.
    pub token_range: (usize, usize),
}

impl Chunk {
    pub fn token_count(&self) -> usize {
        self.token_range.1 - self.token_range.0
    }

    pub fn tokens<'d>(&self, doc: &'d Document) -> &'d [crate::textproc::Token] {
        &doc.tokens[self.token_range.0..self.token_range.1]
    }
}

/// Split a sentence-segmented document into chunks.
pub fn chunk(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    cfg.validate()?;
    if doc.sentences.is_empty() {
        return Err(Error::EmptyDocument);
    }
    match cfg.unit {
        ChunkUnit::Sentences => chunk_by_sentences(doc, cfg),
        ChunkUnit::Tokens => chunk_by_tokens(doc, cfg),
    }
}

fn make_chunk(doc: &Document, index: usize, first_sent: usize, end_sent: usize) -> Chunk {
    let tok_start = doc.sentences[first_sent].0;
    let tok_end = doc.sentences[end_sent - 1].1;
    Chunk {
        index,
        sentence_range: (first_sent, end_sent),
        token_range: (tok_start, tok_end),
    }
}

fn chunk_by_sentences(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    let n = doc.sentences.len();
    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < n {
        let end = (start + cfg.window).min(n);
        chunks.push(make_chunk(doc, chunks.len(), start, end));
        start += cfg.stride;
    }
    Ok(chunks)
}

fn chunk_by_tokens(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    let n = doc.sentences.len();
    let mut chunks = Vec::new();
    let mut start_sent = 0usize;
    loop {
        let start_token = doc.sentences[start_sent].0;
        let mut end_sent = start_sent + 1;
        while end_sent < n && doc.sentences[end_sent].1 - start_token <= cfg.window {
            end_sent += 1;
        }
        chunks.push(make_chunk(doc, chunks.len(), start_sent, end_sent));

        // Next window: first sentence at least `stride` tokens past this
        // window's start, capped at the first sentence not yet covered so
        // an oversize sentence can never cause a gap.
        let target = start_token + cfg.stride;
        let by_stride = (start_sent + 1..n).find(|&s| doc.sentences[s].0 >= target);
        start_sent = match by_stride {
            Some(s) => s.min(end_sent),
            None if end_sent < n => end_sent,
            None => break,
        };
    }
    Ok(chunks)
}
