//! The grounded summarization model: a small shared transformer encoder
//! over chunks, a decoder that cross-attends one grounding chunk at a time,
//! and the selector that scores chunks by importance and relevance with a
//! low-rank bilinear term. Training combines generation cross-entropy, the
//! selector loss with its chunk-order regularizer, and switch-point BCE.

pub mod checkpoint;
mod config;
mod infer;
mod losses;
mod net;
mod optim;
mod params;
mod train;
mod vocab;

pub use config::ModelConfig;
pub use infer::{
    decode_step, encode_chunk_states, pool_chunk_vector, selector_distribution,
    switch_probability,
};
pub use losses::{regularizer, regularizer_var, selector_loss, LossReport, SelectorOutput};
pub use net::{
    chunk_vector, decoder_forward, encode_chunk, importance, output_logits, relevance,
    selector_scores, switch_logit, token_embedding,
};
pub use optim::AdamW;
pub use params::{BoundParams, ModelParams, ParamSet};
pub use train::{
    encode_chunk_vector, evaluate_teacher_forced, forward_episode, importance_score,
    pretrain_importance_on_chunks, pretrain_importance_on_vectors, training_step, EpisodeForward,
    PretrainReport, TrainExample,
};
pub use vocab::{Vocab, BOS, SEP, UNK};
