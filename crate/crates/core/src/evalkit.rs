//! Metrics: clean-room ROUGE-1/2/L (plain overlap and LCS, no stemming or
//! stopword removal), n-gram reuse of summaries against their grounding
//! chunks, front-half position statistics, and chunk-selection /
//! switch-point scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: f64, candidate_total: f64, reference_total: f64) -> RougeScore {
        let precision = if candidate_total > 0.0 {
            overlap / candidate_total
        } else {
            0.0
        };
        let recall = if reference_total > 0.0 {
            overlap / reference_total
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

fn normalize(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if n == 0 || tokens.len() < n {
        return map;
    }
    for w in tokens.windows(n) {
        *map.entry(w).or_insert(0) += 1;
    }
    map
}

/// ROUGE-N with clipped n-gram counts.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand = normalize(candidate);
    let refr = normalize(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    let mut overlap = 0usize;
    for (gram, &c) in &cand_counts {
        if let Some(&r) = ref_counts.get(gram) {
            overlap += c.min(r);
        }
    }
    RougeScore::from_counts(overlap as f64, cand_total as f64, ref_total as f64)
}

/// ROUGE-L from the length of the longest common subsequence.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    let cand = normalize(candidate);
    let refr = normalize(reference);
    let l = lcs_length(&cand, &refr);
    RougeScore::from_counts(l as f64, cand.len() as f64, refr.len() as f64)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(cur[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Percentage of summary n-gram occurrences (duplicates counted) present in
/// the source's n-gram set.
pub fn ngram_reuse(summary: &[String], source: &[String], n: usize) -> f64 {
    let sum = normalize(summary);
    let src = normalize(source);
    if n == 0 || sum.len() < n {
        return 0.0;
    }
    let src_set: BTreeSet<&[String]> = if src.len() >= n {
        src.windows(n).collect()
    } else {
        BTreeSet::new()
    };
    let total = sum.len() - n + 1;
    let found = sum.windows(n).filter(|w| src_set.contains(w)).count();
    100.0 * found as f64 / total as f64
}

/// Among summary n-grams found in their segment's grounding chunk, the
/// fraction whose first chunk occurrence starts in the chunk's front half
/// (`position < floor(len/2)`). `None` when nothing matched.
pub fn front_half_fraction(
    segments: &[(Vec<String>, Vec<String>)],
    n: usize,
) -> Option<f64> {
    let mut found = 0usize;
    let mut front = 0usize;
    for (summary_tokens, chunk_tokens) in segments {
        let sum = normalize(summary_tokens);
        let chunk = normalize(chunk_tokens);
        if sum.len() < n || chunk.len() < n {
            continue;
        }
        let half = chunk.len() / 2;
        for gram in sum.windows(n) {
            let first = chunk.windows(n).position(|w| w == gram);
            if let Some(pos) = first {
                found += 1;
                if pos < half {
                    front += 1;
                }
            }
        }
    }
    if found == 0 {
        None
    } else {
        Some(front as f64 / found as f64)
    }
}

/// Pooled grounding statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingStats {
    /// Exact-match rate of predicted vs gold chunks over all segments.
    pub chunk_accuracy: f64,
    pub switch_precision: f64,
    pub switch_recall: f64,
    pub switch_f1: f64,
    /// Mean predicted switch points per summary.
    pub avg_switch_points: f64,
    /// Fraction of consecutive-segment transitions that stay on the chunk.
    pub same_chunk_rate: f64,
    /// Mean distinct chunks per summary.
    pub unique_chunks_per_summary: f64,
    /// n -> percentage, filled in by the caller when text is available.
    pub ngram_reuse: BTreeMap<usize, f64>,
    pub front_half_fraction: Option<f64>,
}

/// One episode's selection predictions against gold.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionExample {
    pub predicted_chunks: Vec<usize>,
    pub gold_chunks: Vec<usize>,
    pub predicted_switch: Vec<bool>,
    pub gold_switch: Vec<bool>,
}

/// Chunk accuracy, switch P/R/F, and per-summary grounding statistics
/// pooled over episodes.
pub fn selection_metrics(examples: &[SelectionExample]) -> Result<GroundingStats> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.predicted_chunks.len() != ex.gold_chunks.len() {
            return Err(Error::LengthMismatch {
                detail: format!(
                    "episode {i}: {} predicted chunks vs {} gold",
                    ex.predicted_chunks.len(),
                    ex.gold_chunks.len()
                ),
            });
        }
        if ex.predicted_switch.len() != ex.gold_switch.len() {
            return Err(Error::LengthMismatch {
                detail: format!(
                    "episode {i}: {} predicted switch labels vs {} gold",
                    ex.predicted_switch.len(),
                    ex.gold_switch.len()
                ),
            });
        }
    }
    let mut seg_total = 0usize;
    let mut seg_hits = 0usize;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut switch_counts = 0usize;
    let mut transitions = 0usize;
    let mut same = 0usize;
    let mut unique_sum = 0usize;
    for ex in examples {
        seg_total += ex.gold_chunks.len();
        seg_hits += ex
            .predicted_chunks
            .iter()
            .zip(&ex.gold_chunks)
            .filter(|(p, g)| p == g)
            .count();
        for (&p, &g) in ex.predicted_switch.iter().zip(&ex.gold_switch) {
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        switch_counts += ex.predicted_switch.iter().filter(|&&b| b).count();
        for w in ex.predicted_chunks.windows(2) {
            transitions += 1;
            if w[0] == w[1] {
                same += 1;
            }
        }
        unique_sum += ex
            .predicted_chunks
            .iter()
            .collect::<BTreeSet<_>>()
            .len();
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let n = examples.len().max(1) as f64;
    Ok(GroundingStats {
        chunk_accuracy: if seg_total > 0 {
            seg_hits as f64 / seg_total as f64
        } else {
            0.0
        },
        switch_precision: precision,
        switch_recall: recall,
        switch_f1: f1,
        avg_switch_points: switch_counts as f64 / n,
        same_chunk_rate: if transitions > 0 {
            same as f64 / transitions as f64
        } else {
            0.0
        },
        unique_chunks_per_summary: unique_sum as f64 / n,
        ngram_reuse: BTreeMap::new(),
        front_half_fraction: None,
    })
}
