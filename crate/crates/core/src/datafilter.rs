//! Training-data filtering: token-level cleanup of reference summaries,
//! IDF-based removal of uninformative sentences, and episode acceptance.
//!
//! Token cleanup runs on the whitespace-delimited words of the raw text
//! rather than on split tokens: URL and email shapes do not survive
//! punctuation splitting. A word is classified on its punctuation-trimmed
//! core and removed whole.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aligner::GroundingAlignment;
use crate::chunker::Chunk;
use crate::textproc::{
    extract_bigrams, segment_sentences, tokenize, Document, IdfTable, Stopwords, PUNCTUATION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Words longer than this many characters are dropped.
    pub max_token_len: usize,
    /// Sentences scoring below this are dropped.
    pub sentence_salience_min: f64,
    /// Only words with idf above this count toward salience.
    pub idf_floor: f64,
    /// Summaries shorter than this many tokens are rejected.
    pub min_summary_tokens: usize,
    /// Every grounding chunk must share at least this many bigrams
    /// with the summary.
    pub min_shared_bigrams_per_chunk: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_token_len: 25,
            sentence_salience_min: 10.0,
            idf_floor: 1.2,
            min_summary_tokens: 10,
            min_shared_bigrams_per_chunk: 3,
        }
    }
}

/// Why a word was removed during token cleanup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Url,
    Email,
    Mention,
    Hashtag,
    Overlong,
}

/// Counters describing what filtering did to one summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub urls_removed: usize,
    pub emails_removed: usize,
    pub mentions_removed: usize,
    pub hashtags_removed: usize,
    pub overlong_removed: usize,
    pub sentences_removed: usize,
    pub accepted: bool,
    pub reject_reason: Option<String>,
}

impl FilterReport {
    pub fn tokens_removed(&self) -> usize {
        self.urls_removed
            + self.emails_removed
            + self.mentions_removed
            + self.hashtags_removed
            + self.overlong_removed
    }

    fn bump(&mut self, reason: RemovalReason) {
        match reason {
            RemovalReason::Url => self.urls_removed += 1,
            RemovalReason::Email => self.emails_removed += 1,
            RemovalReason::Mention => self.mentions_removed += 1,
            RemovalReason::Hashtag => self.hashtags_removed += 1,
            RemovalReason::Overlong => self.overlong_removed += 1,
        }
    }
}

fn trim_core(word: &str) -> &str {
    word.trim_matches(|c| PUNCTUATION.contains(&c))
}

fn is_url(core: &str) -> bool {
    let lower = core.to_lowercase();
    if lower.starts_with("www.") {
        return true;
    }
    if let Some(pos) = lower.find("://") {
        return pos > 0 && lower[..pos].chars().all(|c| c.is_ascii_alphabetic());
    }
    false
}

fn is_email(core: &str) -> bool {
    let mut parts = core.splitn(2, '@');
    let (local, domain) = match (parts.next(), parts.next()) {
        (Some(l), Some(d)) => (l, d),
        _ => return false,
    };
    if local.is_empty() || domain.contains('@') {
        return false;
    }
    let dot = match domain.rfind('.') {
        Some(i) => i,
        None => return false,
    };
    dot > 0 && dot + 1 < domain.len()
}

fn classify(word: &str, cfg: &FilterConfig) -> Option<RemovalReason> {
    let core = trim_core(word);
    if core.is_empty() {
        return None;
    }
    if is_url(core) {
        return Some(RemovalReason::Url);
    }
    if is_email(core) {
        return Some(RemovalReason::Email);
    }
    if core.starts_with('@') && core.chars().count() > 1 {
        return Some(RemovalReason::Mention);
    }
    if core.starts_with('#') && core.chars().count() > 1 {
        return Some(RemovalReason::Hashtag);
    }
    if core.chars().count() > cfg.max_token_len {
        return Some(RemovalReason::Overlong);
    }
    None
}

/// Remove URL, email, @mention, #hashtag, and overlong words from a summary,
/// then re-tokenize and re-segment what survives.
pub fn clean_summary_tokens(
    summary: &Document,
    cfg: &FilterConfig,
    stopwords: &Stopwords,
) -> (Document, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept: Vec<&str> = Vec::new();
    for word in summary.raw.split_whitespace() {
        match classify(word, cfg) {
            Some(reason) => report.bump(reason),
            None => kept.push(word),
        }
    }
    let cleaned = segment_sentences(tokenize(&kept.join(" "), stopwords));
    (cleaned, report)
}

/// Sum of idf scores of a sentence's words, counting only words whose idf
/// exceeds the floor. Punctuation tokens contribute nothing.
pub fn sentence_salience(
    tokens: &[crate::textproc::Token],
    idf: &IdfTable,
    cfg: &FilterConfig,
) -> f64 {
    tokens
        .iter()
        .filter(|t| !t.is_punctuation())
        .map(|t| idf.idf(&t.normalized()))
        .filter(|&s| s > cfg.idf_floor)
        .sum()
}

/// Drop sentences whose salience is below the threshold, preserving the
/// order and sentence structure of survivors.
pub fn filter_summary_sentences(
    summary: &Document,
    idf: &IdfTable,
    cfg: &FilterConfig,
    stopwords: &Stopwords,
) -> (Document, FilterReport) {
    let mut report = FilterReport::default();
    let mut survivors: Vec<Vec<String>> = Vec::new();
    for s in 0..summary.sentences.len() {
        let tokens = summary.sentence_tokens(s);
        if sentence_salience(tokens, idf, cfg) < cfg.sentence_salience_min {
            report.sentences_removed += 1;
        } else {
            survivors.push(tokens.iter().map(|t| t.text.clone()).collect());
        }
    }
    let doc = Document::from_sentence_token_texts(&survivors, stopwords);
    (doc, report)
}

/// Final acceptance: the summary must have enough tokens, and every distinct
/// grounding chunk it was aligned to must share more than two bigrams with it.
pub fn accept_episode(
    transcript: &Document,
    summary: &Document,
    chunks: &[Chunk],
    alignment: &GroundingAlignment,
    cfg: &FilterConfig,
) -> (bool, Option<String>) {
    if summary.tokens.len() < cfg.min_summary_tokens {
        return (false, Some("too_short".to_string()));
    }
    let summary_grams = extract_bigrams(&summary.tokens);
    let distinct: BTreeSet<usize> = alignment.gold_chunks.iter().copied().collect();
    for c in distinct {
        let chunk_grams = extract_bigrams(chunks[c].tokens(transcript));
        let shared = summary_grams
            .keys()
            .filter(|b| chunk_grams.contains_key(*b))
            .count();
        if shared < cfg.min_shared_bigrams_per_chunk {
            return (false, Some("weak_grounding".to_string()));
        }
    }
    (true, None)
}
