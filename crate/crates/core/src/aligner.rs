//! The alignment oracle: position-biased coverage scoring of summary
//! segments against transcript chunks, gold grounding-chunk assignment with
//! fallback rules, switch-point labels, and importance labels for selector
//! pretraining.
//!
//! The coverage score of a chunk for a segment is the weighted fraction of
//! the segment's unique bigrams that occur in the chunk, where a bigram
//! first occurring at token position `pos` of an `m`-token chunk weighs
//! `1 - gamma * pos / m`. Earlier chunk content therefore counts more,
//! which favors chunks that put summary content at jump-in points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::textproc::{extract_bigrams, Bigram, Document, Token};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Position-decay coefficient in [0, 1].
    pub gamma: f64,
    /// Minimum unique shared bigrams for a scored assignment.
    pub min_shared_bigrams: usize,
    /// Fraction of chunks labeled positive for importance pretraining.
    pub importance_positive_fraction: f64,
}

impl AlignmentConfig {
    pub fn new(
        gamma: f64,
        min_shared_bigrams: usize,
        importance_positive_fraction: f64,
    ) -> Result<AlignmentConfig> {
        let cfg = AlignmentConfig {
            gamma,
            min_shared_bigrams,
            importance_positive_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig {
                field: "alignment.gamma",
                detail: format!("{} not in [0, 1]", self.gamma),
            });
        }
        if !(self.importance_positive_fraction > 0.0 && self.importance_positive_fraction <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "alignment.importance_positive_fraction",
                detail: format!("{} not in (0, 1]", self.importance_positive_fraction),
            });
        }
        Ok(())
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            gamma: 1.0,
            min_shared_bigrams: 4,
            importance_positive_fraction: 0.25,
        }
    }
}

/// How a segment received its chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Scored assignment: best coverage with enough shared bigrams.
    None,
    /// Below threshold on the first segment: assigned to chunk 0.
    FirstChunk,
    /// Below threshold on a later segment: kept the previous chunk.
    PreviousChunk,
}

/// One bigram matched inside a chunk, with its decayed weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramMatch {
    pub bigram: Bigram,
    /// First-occurrence token position within the chunk.
    pub position: usize,
    /// `1 - gamma * position / chunk_len`.
    pub weight: f64,
}

/// Gold grounding decisions for one (transcript, summary) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingAlignment {
    /// Gold chunk index per summary sentence.
    pub gold_chunks: Vec<usize>,
    /// Coverage score of the assigned chunk per summary sentence.
    pub coverage_scores: Vec<f64>,
    pub fallbacks: Vec<Fallback>,
    /// One label per summary token; true exactly at sentence-final tokens.
    pub switch_labels: Vec<bool>,
    /// One label per chunk; true for the top quarter by whole-summary coverage.
    pub importance_labels: Vec<bool>,
}

/// Per-chunk bigram index reused across segments.
pub struct ChunkBigrams {
    grams: BTreeMap<Bigram, usize>,
    token_count: usize,
}

impl ChunkBigrams {
    pub fn build(chunk_tokens: &[Token]) -> ChunkBigrams {
        ChunkBigrams {
            grams: extract_bigrams(chunk_tokens),
            token_count: chunk_tokens.len(),
        }
    }

    /// Matches of the given segment bigram set inside this chunk.
    pub fn matches(
        &self,
        segment_bigrams: &BTreeMap<Bigram, usize>,
        gamma: f64,
    ) -> Vec<BigramMatch> {
        segment_bigrams
            .keys()
            .filter_map(|b| {
                self.grams.get(b).map(|&pos| BigramMatch {
                    bigram: b.clone(),
                    position: pos,
                    weight: 1.0 - gamma * pos as f64 / self.token_count as f64,
                })
            })
            .collect()
    }

    pub fn shared_count(&self, segment_bigrams: &BTreeMap<Bigram, usize>) -> usize {
        segment_bigrams
            .keys()
            .filter(|b| self.grams.contains_key(*b))
            .count()
    }

    pub fn score(&self, segment_bigrams: &BTreeMap<Bigram, usize>, gamma: f64) -> f64 {
        if segment_bigrams.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .matches(segment_bigrams, gamma)
            .iter()
            .map(|m| m.weight)
            .sum();
        total / segment_bigrams.len() as f64
    }
}

/// Position-biased coverage score of one chunk for one summary segment.
pub fn coverage_score(chunk_tokens: &[Token], segment_tokens: &[Token], gamma: f64) -> f64 {
    let grams = extract_bigrams(segment_tokens);
    ChunkBigrams::build(chunk_tokens).score(&grams, gamma)
}

/// Assign every summary sentence its gold grounding chunk.
///
/// The best-scoring chunk wins (ties toward the earlier chunk) when it
/// shares at least `min_shared_bigrams` unique bigrams with the segment;
/// otherwise the first segment falls back to chunk 0 and later segments keep
/// the previous segment's chunk.
pub fn align_summary(
    chunks: &[Chunk],
    transcript: &Document,
    summary: &Document,
    cfg: &AlignmentConfig,
) -> Result<GroundingAlignment> {
    cfg.validate()?;
    if chunks.is_empty() {
        return Err(Error::NoChunks);
    }
    let indexes: Vec<ChunkBigrams> = chunks
        .iter()
        .map(|c| ChunkBigrams::build(c.tokens(transcript)))
        .collect();

    let n = summary.sentences.len();
    let mut gold_chunks = Vec::with_capacity(n);
    let mut coverage_scores = Vec::with_capacity(n);
    let mut fallbacks = Vec::with_capacity(n);

    for s in 0..n {
        let seg_grams = extract_bigrams(summary.sentence_tokens(s));
        let (mut best_c, mut best_score) = (0usize, f64::NEG_INFINITY);
        for (c, idx) in indexes.iter().enumerate() {
            let score = idx.score(&seg_grams, cfg.gamma);
            if score > best_score {
                best_c = c;
                best_score = score;
            }
        }
        if indexes[best_c].shared_count(&seg_grams) >= cfg.min_shared_bigrams {
            gold_chunks.push(best_c);
            coverage_scores.push(best_score);
            fallbacks.push(Fallback::None);
        } else if let Some(&prev) = gold_chunks.last() {
            gold_chunks.push(prev);
            coverage_scores.push(indexes[prev].score(&seg_grams, cfg.gamma));
            fallbacks.push(Fallback::PreviousChunk);
        } else {
            gold_chunks.push(0);
            coverage_scores.push(indexes[0].score(&seg_grams, cfg.gamma));
            fallbacks.push(Fallback::FirstChunk);
        }
    }

    Ok(GroundingAlignment {
        gold_chunks,
        coverage_scores,
        fallbacks,
        switch_labels: label_switch_points(summary),
        importance_labels: label_importance(chunks, transcript, summary, cfg),
    })
}

/// Mark the top quarter of chunks by whole-summary coverage as positive.
pub fn label_importance(
    chunks: &[Chunk],
    transcript: &Document,
    full_summary: &Document,
    cfg: &AlignmentConfig,
) -> Vec<bool> {
    let m = chunks.len();
    if m == 0 {
        return Vec::new();
    }
    let summary_grams = extract_bigrams(&full_summary.tokens);
    let mut scored: Vec<(usize, f64)> = chunks
        .iter()
        .map(|c| {
            (
                c.index,
                ChunkBigrams::build(c.tokens(transcript)).score(&summary_grams, cfg.gamma),
            )
        })
        .collect();
    // Highest score first; ties toward the earlier chunk.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let positives = ((m as f64 * cfg.importance_positive_fraction).ceil() as usize).max(1);
    let mut labels = vec![false; m];
    for &(c, _) in scored.iter().take(positives) {
        labels[c] = true;
    }
    labels
}

/// True exactly at the last token of each summary sentence.
pub fn label_switch_points(summary: &Document) -> Vec<bool> {
    let mut labels = vec![false; summary.tokens.len()];
    for &(_, end) in &summary.sentences {
        labels[end - 1] = true;
    }
    labels
}
