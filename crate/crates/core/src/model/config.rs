use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sizes, loss weights, and optimizer settings for the grounded model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Filled in when the vocabulary is built.
    pub vocab_size: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    /// Rank of the bilinear relevance factors U and V.
    pub lowrank_r: usize,
    /// Coefficient of the chunk-order regularizer.
    pub alpha: f64,
    pub lambda_gen: f64,
    pub lambda_sel: f64,
    pub lambda_switch: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Positions beyond this clamp to the last positional embedding.
    pub max_positions: usize,
    /// Feed-forward hidden width as a multiple of `d_model`.
    pub ffn_multiplier: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            attention_heads: 4,
            lowrank_r: 8,
            alpha: 0.1,
            lambda_gen: 1.0,
            lambda_sel: 1.0,
            lambda_switch: 1.0,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            seed: 0,
            max_positions: 512,
            ffn_multiplier: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.attention_heads != 0 {
            return Err(Error::InvalidConfig {
                field: "model.d_model",
                detail: format!(
                    "{} not divisible by {} attention heads",
                    self.d_model, self.attention_heads
                ),
            });
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig {
                field: "model.alpha",
                detail: format!("{} must be non-negative", self.alpha),
            });
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(Error::InvalidConfig {
                field: "model.layers",
                detail: "need at least one encoder and one decoder layer".into(),
            });
        }
        if self.lowrank_r == 0 || self.max_positions == 0 || self.ffn_multiplier == 0 {
            return Err(Error::InvalidConfig {
                field: "model",
                detail: "lowrank_r, max_positions and ffn_multiplier must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.attention_heads
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_multiplier * self.d_model
    }
}
