use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::textproc::{Document, Token};

pub const BOS: usize = 0;
pub const SEP: usize = 1;
pub const UNK: usize = 2;

/// Word-level vocabulary over lowercased token texts, with `[bos]`, `[sep]`
/// and `[unk]` reserved at fixed ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    map: BTreeMap<String, usize>,
}

impl Vocab {
    /// Collect every normalized token text across the documents.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Vocab {
        let mut set = BTreeSet::new();
        for doc in docs {
            for tok in &doc.tokens {
                set.insert(tok.normalized());
            }
        }
        let mut words = vec!["[bos]".to_string(), "[sep]".to_string(), "[unk]".to_string()];
        words.extend(set);
        Vocab::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let map = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, map }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rebuild_map(&mut self) {
        self.map = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, normalized: &str) -> usize {
        self.map.get(normalized).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(&t.normalized())).collect()
    }
}
