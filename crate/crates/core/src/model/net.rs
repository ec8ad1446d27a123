//! Forward passes: shared encoder over chunk tokens, decoder over the
//! summary prefix with cross-attention to the current grounding chunk, and
//! the selector heads (importance, relevance with a low-rank bilinear term,
//! chunk distribution, switch probability).

use crate::diffkernel::{Tensor, Var};
use crate::{Error, Result};

use super::params::BoundParams;

/// Token embeddings plus learned positional embeddings. Positions past
/// `max_positions` clamp to the last row.
pub fn embed_sequence(p: &BoundParams, ids: &[usize]) -> Result<Var> {
    let tape = p.tape();
    let max_pos = p.config().max_positions;
    let tok = tape.embedding_lookup(p.var("embed.tok"), ids)?;
    let positions: Vec<usize> = (0..ids.len()).map(|i| i.min(max_pos - 1)).collect();
    let pos = tape.embedding_lookup(p.var("embed.pos"), &positions)?;
    tape.add(tok, pos)
}

fn linear(p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let tape = p.tape();
    let h = tape.matmul(x, p.var(&format!("{name}.w")))?;
    tape.add_bias(h, p.var(&format!("{name}.b")))
}

fn layer_norm(p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    p.tape().layer_norm(
        x,
        p.var(&format!("{name}.gain")),
        p.var(&format!("{name}.bias")),
    )
}

fn causal_mask(len: usize) -> Tensor {
    let mut m = Tensor::zeros(len, len);
    for r in 0..len {
        for c in r + 1..len {
            m.set(r, c, -1e30);
        }
    }
    m
}

/// Multi-head attention of `queries` over `keys_values`.
fn attention(p: &BoundParams, name: &str, queries: Var, keys_values: Var, causal: bool) -> Result<Var> {
    let tape = p.tape();
    let cfg = p.config();
    let scale = 1.0 / (cfg.head_dim() as f64).sqrt();
    let mask = if causal {
        let len = tape.value(queries).rows();
        Some(tape.constant(&causal_mask(len)))
    } else {
        None
    };
    let mut merged: Option<Var> = None;
    for h in 0..cfg.attention_heads {
        let q = tape.matmul(queries, p.var(&format!("{name}.h{h}.wq")))?;
        let k = tape.matmul(keys_values, p.var(&format!("{name}.h{h}.wk")))?;
        let v = tape.matmul(keys_values, p.var(&format!("{name}.h{h}.wv")))?;
        let kt = tape.transpose(k)?;
        let mut scores = tape.scale(tape.matmul(q, kt)?, scale)?;
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let weights = tape.softmax_rows(scores)?;
        let out = tape.matmul(weights, v)?;
        merged = Some(match merged {
            None => out,
            Some(acc) => tape.concat_cols(acc, out)?,
        });
    }
    linear(p, &format!("{name}.out"), merged.expect("at least one head"))
}

fn ffn_block(p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let tape = p.tape();
    let h = tape.relu(linear(p, &format!("{name}.l1"), x)?)?;
    linear(p, &format!("{name}.l2"), h)
}

/// Encode chunk tokens into one hidden vector per token.
pub fn encode_chunk(p: &BoundParams, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::EmptyChunk);
    }
    let tape = p.tape();
    let mut x = embed_sequence(p, ids)?;
    for i in 0..p.config().encoder_layers {
        let prefix = format!("enc.{i}");
        let normed = layer_norm(p, &format!("{prefix}.ln1"), x)?;
        let att = attention(p, &format!("{prefix}.attn"), normed, normed, false)?;
        x = tape.add(x, att)?;
        let normed = layer_norm(p, &format!("{prefix}.ln2"), x)?;
        let ff = ffn_block(p, &format!("{prefix}.ffn"), normed)?;
        x = tape.add(x, ff)?;
    }
    layer_norm(p, "enc.final_ln", x)
}

/// Mean-pool hidden states into the chunk vector.
pub fn chunk_vector(p: &BoundParams, states: Var) -> Result<Var> {
    p.tape().mean_pool_rows(states)
}

/// Decoder over `input_ids` (must start with `[bos]`), cross-attending only
/// to the given chunk states. Returns one top-layer state per input position.
pub fn decoder_forward(p: &BoundParams, input_ids: &[usize], chunk_states: Var) -> Result<Var> {
    let tape = p.tape();
    let mut x = embed_sequence(p, input_ids)?;
    for i in 0..p.config().decoder_layers {
        let prefix = format!("dec.{i}");
        let normed = layer_norm(p, &format!("{prefix}.ln1"), x)?;
        let att = attention(p, &format!("{prefix}.self"), normed, normed, true)?;
        x = tape.add(x, att)?;
        let normed = layer_norm(p, &format!("{prefix}.ln2"), x)?;
        let cross = attention(p, &format!("{prefix}.cross"), normed, chunk_states, false)?;
        x = tape.add(x, cross)?;
        let normed = layer_norm(p, &format!("{prefix}.ln3"), x)?;
        let ff = ffn_block(p, &format!("{prefix}.ffn"), normed)?;
        x = tape.add(x, ff)?;
    }
    layer_norm(p, "dec.final_ln", x)
}

/// Vocabulary logits for decoder states.
pub fn output_logits(p: &BoundParams, states: Var) -> Result<Var> {
    linear(p, "out", states)
}

/// One-hidden-layer tanh head mapping a `(b, in)` block to `(b, 1)` scores.
pub fn head(p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let tape = p.tape();
    let h = tape.tanh(linear(p, &format!("{name}.l1"), x)?)?;
    linear(p, &format!("{name}.l2"), h)
}

/// Chunk importance score.
pub fn importance(p: &BoundParams, chunk_vec: Var) -> Result<Var> {
    head(p, "sel.ffn1", chunk_vec)
}

/// Relevance of a chunk vector to the partial-summary state: FFN over the
/// concatenation plus the low-rank bilinear term `(h_c U)(V^T h_y)`.
pub fn relevance(p: &BoundParams, chunk_vec: Var, summary_state: Var) -> Result<Var> {
    let tape = p.tape();
    let cat = tape.concat_cols(chunk_vec, summary_state)?;
    let lin = head(p, "sel.ffn2", cat)?;
    let left = tape.matmul(chunk_vec, p.var("sel.u"))?;
    let vt = tape.transpose(p.var("sel.v"))?;
    let right = tape.matmul(vt, tape.transpose(summary_state)?)?;
    let bilinear = tape.matmul(left, right)?;
    tape.add(lin, bilinear)
}

/// Unnormalized selector scores over all chunks for one summary state:
/// `importance(c) + relevance(c, h)` per chunk, as a `(1, M)` row.
pub fn selector_scores(
    p: &BoundParams,
    chunk_vecs: &[Var],
    importances: &[Var],
    summary_state: Var,
) -> Result<Var> {
    let tape = p.tape();
    debug_assert_eq!(chunk_vecs.len(), importances.len());
    let mut row: Option<Var> = None;
    for (&cv, &imp) in chunk_vecs.iter().zip(importances) {
        let rel = relevance(p, cv, summary_state)?;
        let score = tape.add(imp, rel)?;
        row = Some(match row {
            None => score,
            Some(acc) => tape.concat_cols(acc, score)?,
        });
    }
    row.ok_or(Error::NoChunks)
}

/// Switch logit for a decoder state paired with the anticipated token's
/// embedding; the switch probability is its sigmoid.
pub fn switch_logit(p: &BoundParams, state: Var, token_embedding: Var) -> Result<Var> {
    let cat = p.tape().concat_cols(state, token_embedding)?;
    head(p, "sel.ffn3", cat)
}

/// Embedding row for one token id as a `(1, d)` var.
pub fn token_embedding(p: &BoundParams, id: usize) -> Result<Var> {
    p.tape().embedding_lookup(p.var("embed.tok"), &[id])
}
