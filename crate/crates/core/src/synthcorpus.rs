//! Deterministic synthetic episodes with planted groundings.
//!
//! Each transcript chunk draws its words from a disjoint vocabulary band,
//! so a summary sentence copied from a chunk's first sentence is
//! unambiguously alignable to it. Noise substitutes words uniformly from
//! the whole synthetic vocabulary. The first planted chunk is always chunk
//! 0, matching the decoder's fixed starting chunk; `zigzag` swaps later
//! planted chunks pairwise to create chronology-violating gold sequences.

use serde::{Deserialize, Serialize};

use crate::aligner::label_switch_points;
use crate::rng::Rng;
use crate::textproc::{Document, Stopwords};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_episodes: usize,
    pub chunks_per_episode: usize,
    pub sentences_per_chunk: usize,
    pub vocab_size: usize,
    pub summary_segments: usize,
    /// Probability that a summary word is replaced by a random vocab word.
    pub noise_rate: f64,
    /// Plant later gold chunks in pairwise-swapped (non-chronological) order.
    pub zigzag: bool,
    pub sentence_len_min: usize,
    pub sentence_len_max: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_episodes: 10,
            chunks_per_episode: 6,
            sentences_per_chunk: 3,
            vocab_size: 240,
            summary_segments: 4,
            noise_rate: 0.0,
            zigzag: false,
            sentence_len_min: 10,
            sentence_len_max: 12,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidSynthConfig(format!(
                "noise_rate {} not in [0, 1)",
                self.noise_rate
            )));
        }
        if self.summary_segments == 0 || self.summary_segments > self.chunks_per_episode {
            return Err(Error::InvalidSynthConfig(format!(
                "summary_segments {} must be in 1..={}",
                self.summary_segments, self.chunks_per_episode
            )));
        }
        if self.zigzag {
            let quarter = (self.chunks_per_episode / 4).max(1);
            let k = self.summary_segments - 1;
            if self.chunks_per_episode < 8 || k.div_ceil(2) > quarter {
                return Err(Error::InvalidSynthConfig(format!(
                    "zigzag planting needs >= 8 chunks and fits {} extra segments \
                     in quarters of {} chunks",
                    k, quarter
                )));
            }
        }
        if self.n_episodes == 0 || self.sentences_per_chunk == 0 {
            return Err(Error::InvalidSynthConfig(
                "n_episodes and sentences_per_chunk must be positive".into(),
            ));
        }
        if self.vocab_size < self.chunks_per_episode * 4 {
            return Err(Error::InvalidSynthConfig(format!(
                "vocab_size {} too small for {} chunk bands",
                self.vocab_size, self.chunks_per_episode
            )));
        }
        if self.sentence_len_min < 5 || self.sentence_len_max < self.sentence_len_min {
            return Err(Error::InvalidSynthConfig(
                "sentence lengths must satisfy 5 <= min <= max".into(),
            ));
        }
        Ok(())
    }
}

/// One synthetic episode with its planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthEpisode {
    pub id: String,
    pub transcript: Document,
    pub summary: Document,
    /// Gold chunk per summary segment, by construction.
    pub planted_chunks: Vec<usize>,
    /// True at each summary sentence's last token.
    pub planted_switch: Vec<bool>,
}

fn word(index: usize) -> String {
    format!("tok{index:04}")
}

fn capitalized(index: usize) -> String {
    format!("Tok{index:04}")
}

/// Deterministic corpus from the config seed.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<SynthEpisode>> {
    cfg.validate()?;
    let stopwords = Stopwords::builtin();
    let band = cfg.vocab_size / cfg.chunks_per_episode;
    let mut root = Rng::new(cfg.seed ^ 0x73796e74);
    let mut episodes = Vec::with_capacity(cfg.n_episodes);
    for e in 0..cfg.n_episodes {
        let mut rng = root.fork(e as u64);

        // Transcript: chunks_per_episode blocks of sentences, one band each.
        let mut sentences: Vec<Vec<usize>> = Vec::new();
        for c in 0..cfg.chunks_per_episode {
            for _ in 0..cfg.sentences_per_chunk {
                let len = cfg.sentence_len_min
                    + rng.next_below(cfg.sentence_len_max - cfg.sentence_len_min + 1);
                let words: Vec<usize> =
                    (0..len).map(|_| c * band + rng.next_below(band)).collect();
                sentences.push(words);
            }
        }
        let transcript_raw = sentences
            .iter()
            .map(|ws| render_sentence(ws))
            .collect::<Vec<_>>()
            .join(" ");
        let transcript = Document::parse(&transcript_raw, &stopwords);

        // Planted chunk per segment: chunk 0 first, then a sorted sample of
        // the rest. Zigzag mode alternates picks from the top and bottom
        // quarters of the chunk range, so every other transition jumps
        // backward by at least half the transcript.
        let mut picks = vec![0usize];
        if cfg.zigzag {
            let m = cfg.chunks_per_episode;
            let quarter = (m / 4).max(1);
            let k = cfg.summary_segments - 1;
            let n_high = k.div_ceil(2);
            let n_low = k / 2;
            let high = sample_sorted(&mut rng, m - quarter, m, n_high);
            let low = sample_sorted(&mut rng, 1, 1 + quarter, n_low);
            for i in 0..n_high {
                picks.push(high[i]);
                if i < n_low {
                    picks.push(low[i]);
                }
            }
        } else {
            let mut rest: Vec<usize> = (1..cfg.chunks_per_episode).collect();
            for i in (1..rest.len()).rev() {
                let j = rng.next_below(i + 1);
                rest.swap(i, j);
            }
            let mut sample: Vec<usize> = rest[..cfg.summary_segments - 1].to_vec();
            sample.sort_unstable();
            picks.extend(sample);
        }

        // Summary: noised copies of each planted chunk's first sentence.
        let mut summary_sents = Vec::with_capacity(picks.len());
        for &c in &picks {
            let source = &sentences[c * cfg.sentences_per_chunk];
            let mut words = source.clone();
            for w in words.iter_mut() {
                if rng.next_f64() < cfg.noise_rate {
                    *w = rng.next_below(cfg.vocab_size);
                }
            }
            summary_sents.push(render_sentence(&words));
        }
        let summary = Document::parse(&summary_sents.join(" "), &stopwords);
        let planted_switch = label_switch_points(&summary);

        episodes.push(SynthEpisode {
            id: format!("synth-{e:04}"),
            transcript,
            summary,
            planted_chunks: picks,
            planted_switch,
        });
    }
    Ok(episodes)
}

/// `n` distinct values from `[lo, hi)`, ascending.
fn sample_sorted(rng: &mut Rng, lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (lo..hi).collect();
    for i in (1..pool.len()).rev() {
        let j = rng.next_below(i + 1);
        pool.swap(i, j);
    }
    let mut out: Vec<usize> = pool[..n].to_vec();
    out.sort_unstable();
    out
}

fn render_sentence(word_ids: &[usize]) -> String {
    let mut parts = Vec::with_capacity(word_ids.len() + 1);
    for (i, &w) in word_ids.iter().enumerate() {
        parts.push(if i == 0 { capitalized(w) } else { word(w) });
    }
    parts.push(".".to_string());
    parts.join(" ")
}
