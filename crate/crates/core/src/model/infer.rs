//! Value-level inference helpers. Each call builds a throwaway tape with
//! frozen parameters, runs the forward pass, and returns plain tensors.

use crate::diffkernel::{Tape, Tensor};
use crate::{Error, Result};

use super::net;
use super::params::{BoundParams, ModelParams};

/// Hidden states of one encoded chunk.
pub fn encode_chunk_states(params: &ModelParams, ids: &[usize]) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let states = net::encode_chunk(&bound, ids)?;
    Ok((*tape.value(states)).clone())
}

/// Mean-pooled chunk vector from already-encoded states.
pub fn pool_chunk_vector(states: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, states.cols());
    for r in 0..states.rows() {
        for c in 0..states.cols() {
            out.set(0, c, out.get(0, c) + states.get(r, c));
        }
    }
    for v in out.data_mut() {
        *v /= states.rows() as f64;
    }
    out
}

/// One decoding step: the next-token distribution after the prefix, plus
/// the decoder's state at the last prefix position (h of the partial
/// summary). `prefix_ids` must start with `[bos]`; the decoder attends only
/// to the given chunk's states.
pub fn decode_step(
    params: &ModelParams,
    prefix_ids: &[usize],
    chunk_states: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if prefix_ids.first() != Some(&super::vocab::BOS) {
        return Err(Error::InvalidConfig {
            field: "decode.prefix",
            detail: "prefix must start with [bos]".into(),
        });
    }
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let enc = tape.constant(chunk_states);
    let states = net::decoder_forward(&bound, prefix_ids, enc)?;
    let n = tape.value(states).rows();
    let last = tape.slice_rows(states, n - 1, n)?;
    let logits = net::output_logits(&bound, last)?;
    let dist = tape.softmax_rows(logits)?;
    Ok(((*tape.value(dist)).clone(), (*tape.value(last)).clone()))
}

/// Switch probability for a decoder state paired with a candidate token.
pub fn switch_probability(params: &ModelParams, state: &Tensor, token_id: usize) -> Result<f64> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let h = tape.constant(state);
    let emb = net::token_embedding(&bound, token_id)?;
    let logit = net::switch_logit(&bound, h, emb)?;
    Ok(1.0 / (1.0 + (-tape.item(logit)).exp()))
}

/// Selector distribution over chunks given their vectors and the
/// partial-summary state: softmax of importance + relevance scores.
pub fn selector_distribution(
    params: &ModelParams,
    chunk_vectors: &[Tensor],
    state: &Tensor,
) -> Result<Vec<f64>> {
    if chunk_vectors.is_empty() {
        return Err(Error::NoChunks);
    }
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let h = tape.constant(state);
    let mut vecs = Vec::with_capacity(chunk_vectors.len());
    let mut imps = Vec::with_capacity(chunk_vectors.len());
    for cv in chunk_vectors {
        let v = tape.constant(cv);
        imps.push(net::importance(&bound, v)?);
        vecs.push(v);
    }
    let scores = net::selector_scores(&bound, &vecs, &imps, h)?;
    let dist = tape.softmax_rows(scores)?;
    Ok(tape.value(dist).data().to_vec())
}
