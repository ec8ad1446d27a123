//! Tokenization, sentence segmentation, bigram extraction, stopwords, and
//! corpus IDF statistics.
//!
//! Everything here is deterministic and rule-based so downstream alignment
//! and filtering behave identically across runs. Offsets are character
//! offsets into the raw text.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Characters that are split into their own tokens.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')', '[', ']'];

/// Sentence terminators for the rule-based segmenter.
const TERMINATORS: &[&str] = &[".", "!", "?"];

fn is_punct_char(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// A single token with its character span in the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub is_stopword: bool,
}

impl Token {
    /// True when every character of the token is punctuation.
    pub fn is_punctuation(&self) -> bool {
        !self.text.is_empty() && self.text.chars().all(is_punct_char)
    }

    /// Lowercased text, the normalization used for bigrams, IDF and vocab.
    pub fn normalized(&self) -> String {
        self.text.to_lowercase()
    }
}

/// A tokenized, optionally sentence-segmented text.
///
/// `sentences` holds `(start_token, end_token_exclusive)` spans that
/// partition the token list once [`segment_sentences`] has run; a freshly
/// tokenized document has no sentence structure yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub raw: String,
    pub tokens: Vec<Token>,
    pub sentences: Vec<(usize, usize)>,
}

impl Document {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of sentence `i`.
    pub fn sentence_tokens(&self, i: usize) -> &[Token] {
        let (s, e) = self.sentences[i];
        &self.tokens[s..e]
    }

    /// Tokenize and sentence-segment in one go.
    pub fn parse(raw: &str, stopwords: &Stopwords) -> Document {
        segment_sentences(tokenize(raw, stopwords))
    }

    /// Rebuild a document from per-sentence token texts, keeping the given
    /// sentence structure instead of re-running the segmenter. Token texts
    /// must come from a previous tokenization (whitespace-free, punctuation
    /// already split), so re-tokenizing the joined text reproduces them.
    pub(crate) fn from_sentence_token_texts(
        sentences: &[Vec<String>],
        stopwords: &Stopwords,
    ) -> Document {
        let raw = sentences
            .iter()
            .map(|s| detokenize(s.iter().map(|t| t.as_str())))
            .collect::<Vec<_>>()
            .join(" ");
        let mut doc = tokenize(&raw, stopwords);
        let mut spans = Vec::with_capacity(sentences.len());
        let mut start = 0usize;
        for sent in sentences {
            let end = start + sent.len();
            spans.push((start, end));
            start = end;
        }
        debug_assert_eq!(start, doc.tokens.len(), "token texts must be atomic");
        doc.sentences = spans;
        doc
    }
}

/// Fixed stopword list; membership is checked on lowercased text.
#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The built-in list of common English function words.
    pub fn builtin() -> Stopwords {
        Stopwords::from_lines(include_str!("../data/stopwords.txt"))
    }

    /// Load a list from a plain-text file, one word per line, UTF-8.
    pub fn from_file(path: &Path) -> Result<Stopwords> {
        Ok(Stopwords::from_lines(&std::fs::read_to_string(path)?))
    }

    fn from_lines(text: &str) -> Stopwords {
        Stopwords {
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::builtin()
    }
}

/// Split raw text on whitespace, with punctuation characters split into
/// their own tokens. Character offsets are recorded; sentence structure is
/// left empty.
pub fn tokenize(raw: &str, stopwords: &Stopwords) -> Document {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut word_start = 0usize;

    let flush = |word: &mut String, start: usize, end: usize, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            let text = std::mem::take(word);
            let is_stopword = stopwords.contains(&text);
            tokens.push(Token {
                text,
                char_start: start,
                char_end: end,
                is_stopword,
            });
        }
    };

    for (ci, ch) in raw.chars().enumerate() {
        if ch.is_whitespace() {
            flush(&mut word, word_start, ci, &mut tokens);
        } else if is_punct_char(ch) {
            flush(&mut word, word_start, ci, &mut tokens);
            tokens.push(Token {
                text: ch.to_string(),
                char_start: ci,
                char_end: ci + 1,
                is_stopword: false,
            });
        } else {
            if word.is_empty() {
                word_start = ci;
            }
            word.push(ch);
        }
    }
    let total = raw.chars().count();
    flush(&mut word, word_start, total, &mut tokens);

    Document {
        raw: raw.to_string(),
        tokens,
        sentences: Vec::new(),
    }
}

/// Rule-based sentence segmentation: a boundary follows `.` `!` `?` unless
/// the next token starts with a lowercase letter (abbreviation heuristic).
/// A document without terminators is a single sentence.
pub fn segment_sentences(mut doc: Document) -> Document {
    let n = doc.tokens.len();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    for i in 0..n {
        if TERMINATORS.contains(&doc.tokens[i].text.as_str()) {
            let suppressed = doc
                .tokens
                .get(i + 1)
                .and_then(|t| t.text.chars().next())
                .map(|c| c.is_lowercase())
                .unwrap_or(false);
            if !suppressed {
                sentences.push((start, i + 1));
                start = i + 1;
            }
        }
    }
    if start < n {
        sentences.push((start, n));
    }
    doc.sentences = sentences;
    doc
}

/// A normalized (lowercased) bigram.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bigram {
    pub first: String,
    pub second: String,
}

impl Bigram {
    pub fn new(first: &str, second: &str) -> Bigram {
        Bigram {
            first: first.to_lowercase(),
            second: second.to_lowercase(),
        }
    }
}

/// Unique bigrams of a token slice mapped to the 0-based position of their
/// first occurrence. Stopwords-only bigrams and pairs touching punctuation
/// tokens are excluded.
pub fn extract_bigrams(tokens: &[Token]) -> BTreeMap<Bigram, usize> {
    let mut out = BTreeMap::new();
    if tokens.len() < 2 {
        return out;
    }
    for i in 0..tokens.len() - 1 {
        let (a, b) = (&tokens[i], &tokens[i + 1]);
        if a.is_punctuation() || b.is_punctuation() {
            continue;
        }
        if a.is_stopword && b.is_stopword {
            continue;
        }
        out.entry(Bigram::new(&a.text, &b.text)).or_insert(i);
    }
    out
}

/// Smoothed inverse document frequencies over a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdfTable {
    scores: BTreeMap<String, f64>,
    pub doc_count: usize,
    max_idf: f64,
}

impl IdfTable {
    /// Score for a word; unseen words get the maximum observed idf.
    pub fn idf(&self, word: &str) -> f64 {
        let key = word.to_lowercase();
        self.scores.get(&key).copied().unwrap_or(self.max_idf)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// idf(w) = ln((1 + N) / (1 + df(w))) + 1 over the corpus documents.
/// Punctuation tokens are not counted as words.
pub fn build_idf(corpus: &[Document]) -> Result<IdfTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = corpus.len();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut seen = HashSet::new();
        for tok in &doc.tokens {
            if tok.is_punctuation() {
                continue;
            }
            let key = tok.normalized();
            if seen.insert(key.clone()) {
                *df.entry(key).or_insert(0) += 1;
            }
        }
    }
    let scores: BTreeMap<String, f64> = df
        .into_iter()
        .map(|(w, d)| (w, ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0))
        .collect();
    let observed_max = scores.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_idf = if scores.is_empty() {
        ((1 + n) as f64).ln() + 1.0
    } else {
        observed_max
    };
    Ok(IdfTable {
        scores,
        doc_count: n,
        max_idf,
    })
}

const ATTACH_PREV: &[&str] = &[".", ",", "!", "?", ";", ":", ")", "]", "'", "\""];
const ATTACH_NEXT: &[&str] = &["(", "[", "'"];

/// Space-join token texts with punctuation attachment.
pub fn detokenize<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    let mut suppress_space = true;
    for t in texts {
        if !suppress_space && !ATTACH_PREV.contains(&t) {
            out.push(' ');
        }
        out.push_str(t);
        suppress_space = ATTACH_NEXT.contains(&t);
    }
    out
}
