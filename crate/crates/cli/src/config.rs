//! Run configuration: one JSON document with a section per pipeline stage,
//! every field defaulted, unknown keys rejected. Each field is overridable
//! by a CLI flag of the same dotted name.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use groundsum::aligner::AlignmentConfig;
use groundsum::chunker::{ChunkUnit, ChunkingConfig};
use groundsum::datafilter::FilterConfig;
use groundsum::decode::DecodeConfig;
use groundsum::model::ModelConfig;
use groundsum::synthcorpus::SynthConfig;

/// Knobs for the training and pretraining stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub pretrain_update_encoder: bool,
    pub pretrain_learning_rate: f64,
    /// Print a loss line every this many steps (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            batch_size: 1,
            pretrain_steps: 200,
            pretrain_update_encoder: false,
            pretrain_learning_rate: 1e-2,
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub chunking: ChunkingConfig,
    pub alignment: AlignmentConfig,
    pub filter: FilterConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config `{}`", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config `{}`", path.display()))?;
        Ok(cfg)
    }
}

/// CLI overrides; every `RunConfig` field is reachable under its dotted name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long = "chunking.unit", global = true, value_name = "tokens|sentences")]
    pub chunking_unit: Option<String>,
    #[arg(long = "chunking.window", global = true, value_name = "N")]
    pub chunking_window: Option<usize>,
    #[arg(long = "chunking.stride", global = true, value_name = "N")]
    pub chunking_stride: Option<usize>,

    #[arg(long = "alignment.gamma", global = true, value_name = "G")]
    pub alignment_gamma: Option<f64>,
    #[arg(long = "alignment.min_shared_bigrams", global = true, value_name = "N")]
    pub alignment_min_shared_bigrams: Option<usize>,
    #[arg(
        long = "alignment.importance_positive_fraction",
        global = true,
        value_name = "F"
    )]
    pub alignment_importance_positive_fraction: Option<f64>,

    #[arg(long = "filter.max_token_len", global = true, value_name = "N")]
    pub filter_max_token_len: Option<usize>,
    #[arg(long = "filter.sentence_salience_min", global = true, value_name = "S")]
    pub filter_sentence_salience_min: Option<f64>,
    #[arg(long = "filter.idf_floor", global = true, value_name = "S")]
    pub filter_idf_floor: Option<f64>,
    #[arg(long = "filter.min_summary_tokens", global = true, value_name = "N")]
    pub filter_min_summary_tokens: Option<usize>,
    #[arg(
        long = "filter.min_shared_bigrams_per_chunk",
        global = true,
        value_name = "N"
    )]
    pub filter_min_shared_bigrams_per_chunk: Option<usize>,

    #[arg(long = "model.d_model", global = true, value_name = "N")]
    pub model_d_model: Option<usize>,
    #[arg(long = "model.encoder_layers", global = true, value_name = "N")]
    pub model_encoder_layers: Option<usize>,
    #[arg(long = "model.decoder_layers", global = true, value_name = "N")]
    pub model_decoder_layers: Option<usize>,
    #[arg(long = "model.attention_heads", global = true, value_name = "N")]
    pub model_attention_heads: Option<usize>,
    #[arg(long = "model.lowrank_r", global = true, value_name = "N")]
    pub model_lowrank_r: Option<usize>,
    #[arg(long = "model.alpha", global = true, value_name = "A")]
    pub model_alpha: Option<f64>,
    #[arg(long = "model.lambda_gen", global = true, value_name = "L")]
    pub model_lambda_gen: Option<f64>,
    #[arg(long = "model.lambda_sel", global = true, value_name = "L")]
    pub model_lambda_sel: Option<f64>,
    #[arg(long = "model.lambda_switch", global = true, value_name = "L")]
    pub model_lambda_switch: Option<f64>,
    #[arg(long = "model.learning_rate", global = true, value_name = "LR")]
    pub model_learning_rate: Option<f64>,
    #[arg(long = "model.weight_decay", global = true, value_name = "WD")]
    pub model_weight_decay: Option<f64>,
    #[arg(long = "model.seed", global = true, value_name = "SEED")]
    pub model_seed: Option<u64>,
    #[arg(long = "model.max_positions", global = true, value_name = "N")]
    pub model_max_positions: Option<usize>,
    #[arg(long = "model.ffn_multiplier", global = true, value_name = "N")]
    pub model_ffn_multiplier: Option<usize>,

    #[arg(long = "train.steps", global = true, value_name = "N")]
    pub train_steps: Option<usize>,
    #[arg(long = "train.batch_size", global = true, value_name = "N")]
    pub train_batch_size: Option<usize>,
    #[arg(long = "train.pretrain_steps", global = true, value_name = "N")]
    pub train_pretrain_steps: Option<usize>,
    #[arg(long = "train.pretrain_update_encoder", global = true, value_name = "BOOL")]
    pub train_pretrain_update_encoder: Option<bool>,
    #[arg(long = "train.pretrain_learning_rate", global = true, value_name = "LR")]
    pub train_pretrain_learning_rate: Option<f64>,
    #[arg(long = "train.log_every", global = true, value_name = "N")]
    pub train_log_every: Option<usize>,

    #[arg(long = "decode.beam_size", global = true, value_name = "K")]
    pub decode_beam_size: Option<usize>,
    #[arg(long = "decode.length_penalty", global = true, value_name = "P")]
    pub decode_length_penalty: Option<f64>,
    #[arg(long = "decode.switch_threshold", global = true, value_name = "T")]
    pub decode_switch_threshold: Option<f64>,
    #[arg(long = "decode.max_summary_tokens", global = true, value_name = "N")]
    pub decode_max_summary_tokens: Option<usize>,
    /// Comma-separated chunk indices every summary must visit.
    #[arg(long = "decode.required_chunks", global = true, value_name = "I,J,…")]
    pub decode_required_chunks: Option<String>,

    #[arg(long = "synth.seed", global = true, value_name = "SEED")]
    pub synth_seed: Option<u64>,
    #[arg(long = "synth.n_episodes", global = true, value_name = "N")]
    pub synth_n_episodes: Option<usize>,
    #[arg(long = "synth.chunks_per_episode", global = true, value_name = "N")]
    pub synth_chunks_per_episode: Option<usize>,
    #[arg(long = "synth.sentences_per_chunk", global = true, value_name = "N")]
    pub synth_sentences_per_chunk: Option<usize>,
    #[arg(long = "synth.vocab_size", global = true, value_name = "N")]
    pub synth_vocab_size: Option<usize>,
    #[arg(long = "synth.summary_segments", global = true, value_name = "N")]
    pub synth_summary_segments: Option<usize>,
    #[arg(long = "synth.noise_rate", global = true, value_name = "R")]
    pub synth_noise_rate: Option<f64>,
    #[arg(long = "synth.zigzag", global = true, value_name = "BOOL")]
    pub synth_zigzag: Option<bool>,
    #[arg(long = "synth.sentence_len_min", global = true, value_name = "N")]
    pub synth_sentence_len_min: Option<usize>,
    #[arg(long = "synth.sentence_len_max", global = true, value_name = "N")]
    pub synth_sentence_len_max: Option<usize>,
}

macro_rules! apply_opt {
    ($src:expr, $dst:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(unit) = &self.chunking_unit {
            cfg.chunking.unit = match unit.as_str() {
                "tokens" => ChunkUnit::Tokens,
                "sentences" => ChunkUnit::Sentences,
                other => anyhow::bail!(
                    "--chunking.unit: `{other}` is not one of tokens|sentences"
                ),
            };
        }
        apply_opt!(self.chunking_window, cfg.chunking.window);
        apply_opt!(self.chunking_stride, cfg.chunking.stride);

        apply_opt!(self.alignment_gamma, cfg.alignment.gamma);
        apply_opt!(
            self.alignment_min_shared_bigrams,
            cfg.alignment.min_shared_bigrams
        );
        apply_opt!(
            self.alignment_importance_positive_fraction,
            cfg.alignment.importance_positive_fraction
        );

        apply_opt!(self.filter_max_token_len, cfg.filter.max_token_len);
        apply_opt!(
            self.filter_sentence_salience_min,
            cfg.filter.sentence_salience_min
        );
        apply_opt!(self.filter_idf_floor, cfg.filter.idf_floor);
        apply_opt!(self.filter_min_summary_tokens, cfg.filter.min_summary_tokens);
        apply_opt!(
            self.filter_min_shared_bigrams_per_chunk,
            cfg.filter.min_shared_bigrams_per_chunk
        );

        apply_opt!(self.model_d_model, cfg.model.d_model);
        apply_opt!(self.model_encoder_layers, cfg.model.encoder_layers);
        apply_opt!(self.model_decoder_layers, cfg.model.decoder_layers);
        apply_opt!(self.model_attention_heads, cfg.model.attention_heads);
        apply_opt!(self.model_lowrank_r, cfg.model.lowrank_r);
        apply_opt!(self.model_alpha, cfg.model.alpha);
        apply_opt!(self.model_lambda_gen, cfg.model.lambda_gen);
        apply_opt!(self.model_lambda_sel, cfg.model.lambda_sel);
        apply_opt!(self.model_lambda_switch, cfg.model.lambda_switch);
        apply_opt!(self.model_learning_rate, cfg.model.learning_rate);
        apply_opt!(self.model_weight_decay, cfg.model.weight_decay);
        apply_opt!(self.model_seed, cfg.model.seed);
        apply_opt!(self.model_max_positions, cfg.model.max_positions);
        apply_opt!(self.model_ffn_multiplier, cfg.model.ffn_multiplier);

        apply_opt!(self.train_steps, cfg.train.steps);
        apply_opt!(self.train_batch_size, cfg.train.batch_size);
        apply_opt!(self.train_pretrain_steps, cfg.train.pretrain_steps);
        apply_opt!(
            self.train_pretrain_update_encoder,
            cfg.train.pretrain_update_encoder
        );
        apply_opt!(
            self.train_pretrain_learning_rate,
            cfg.train.pretrain_learning_rate
        );
        apply_opt!(self.train_log_every, cfg.train.log_every);

        apply_opt!(self.decode_beam_size, cfg.decode.beam_size);
        apply_opt!(self.decode_length_penalty, cfg.decode.length_penalty);
        apply_opt!(self.decode_switch_threshold, cfg.decode.switch_threshold);
        apply_opt!(
            self.decode_max_summary_tokens,
            cfg.decode.max_summary_tokens
        );
        if let Some(req) = &self.decode_required_chunks {
            let mut set = BTreeSet::new();
            for part in req.split(',').filter(|p| !p.trim().is_empty()) {
                let idx: usize = part
                    .trim()
                    .parse()
                    .with_context(|| format!("--decode.required_chunks: bad index `{part}`"))?;
                set.insert(idx);
            }
            cfg.decode.required_chunks = Some(set);
        }

        apply_opt!(self.synth_seed, cfg.synth.seed);
        apply_opt!(self.synth_n_episodes, cfg.synth.n_episodes);
        apply_opt!(self.synth_chunks_per_episode, cfg.synth.chunks_per_episode);
        apply_opt!(
            self.synth_sentences_per_chunk,
            cfg.synth.sentences_per_chunk
        );
        apply_opt!(self.synth_vocab_size, cfg.synth.vocab_size);
        apply_opt!(self.synth_summary_segments, cfg.synth.summary_segments);
        apply_opt!(self.synth_noise_rate, cfg.synth.noise_rate);
        apply_opt!(self.synth_zigzag, cfg.synth.zigzag);
        apply_opt!(self.synth_sentence_len_min, cfg.synth.sentence_len_min);
        apply_opt!(self.synth_sentence_len_max, cfg.synth.sentence_len_max);
        Ok(())
    }
}
