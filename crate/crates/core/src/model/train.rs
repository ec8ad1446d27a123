//! Teacher-forced training: each summary sentence is decoded against its
//! gold grounding chunk, the selector is supervised on gold chunk labels
//! with the chunk-order regularizer, and the switch head on sentence-final
//! token labels. One optimizer step per batch.

use std::collections::BTreeMap;

use crate::aligner::GroundingAlignment;
use crate::chunker::Chunk;
use crate::diffkernel::{Tape, Tensor, Var};
use crate::textproc::Document;
use crate::{Error, Result};

use super::losses::{regularizer_var, LossReport};
use super::net;
use super::optim::AdamW;
use super::params::{BoundParams, ModelParams};
use super::vocab::{Vocab, SEP};

/// One episode prepared for training: token ids per chunk, summary token
/// ids with sentence spans, and the gold labels from the aligner.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub chunk_token_ids: Vec<Vec<usize>>,
    pub summary_ids: Vec<usize>,
    /// `(start, end)` spans over `summary_ids`, one per summary sentence.
    pub segments: Vec<(usize, usize)>,
    pub gold_chunks: Vec<usize>,
    pub switch_labels: Vec<bool>,
}

impl TrainExample {
    pub fn build(
        transcript: &Document,
        chunks: &[Chunk],
        summary: &Document,
        alignment: &GroundingAlignment,
        vocab: &Vocab,
    ) -> Result<TrainExample> {
        if chunks.is_empty() {
            return Err(Error::NoChunks);
        }
        if alignment.gold_chunks.len() != summary.sentences.len() {
            return Err(Error::LengthMismatch {
                detail: format!(
                    "{} gold chunks for {} summary sentences",
                    alignment.gold_chunks.len(),
                    summary.sentences.len()
                ),
            });
        }
        if let Some(&bad) = alignment.gold_chunks.iter().find(|&&c| c >= chunks.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                chunks: chunks.len(),
            });
        }
        Ok(TrainExample {
            chunk_token_ids: chunks
                .iter()
                .map(|c| vocab.encode(c.tokens(transcript)))
                .collect(),
            summary_ids: vocab.encode(&summary.tokens),
            segments: summary.sentences.clone(),
            gold_chunks: alignment.gold_chunks.clone(),
            switch_labels: alignment.switch_labels.clone(),
        })
    }
}

/// Loss graph handles for one episode.
pub struct EpisodeForward {
    pub total: Var,
    pub generation: Var,
    pub selector_ce: Var,
    pub regularizer: Var,
    pub switch_bce: Var,
    /// `(n_segments, n_chunks)` unnormalized selector scores.
    pub selector_score_rows: Var,
    /// `(n_summary_tokens, 1)` switch probabilities.
    pub switch_probs: Var,
}

/// Build the full teacher-forced loss graph for one episode.
///
/// For segment `j` the decoder runs over the gold prefix through the end of
/// the segment, cross-attending to the gold chunk. The selector state for
/// segment `j + 1` is the last state of run `j`, so selection is conditioned
/// on the previous segment's chunk exactly as at inference time.
pub fn forward_episode(p: &BoundParams, ex: &TrainExample) -> Result<EpisodeForward> {
    let tape = p.tape();
    let cfg = p.config();
    let n_segments = ex.segments.len();
    if n_segments == 0 {
        return Err(Error::EmptyDocument);
    }
    let n_tokens = ex.summary_ids.len();

    // Encode every chunk once: the selector scores all of them.
    let mut chunk_states = Vec::with_capacity(ex.chunk_token_ids.len());
    let mut chunk_vecs = Vec::with_capacity(ex.chunk_token_ids.len());
    let mut importances = Vec::with_capacity(ex.chunk_token_ids.len());
    for ids in &ex.chunk_token_ids {
        let states = net::encode_chunk(p, ids)?;
        let vec = net::chunk_vector(p, states)?;
        importances.push(net::importance(p, vec)?);
        chunk_states.push(states);
        chunk_vecs.push(vec);
    }

    let mut gen_blocks: Vec<Var> = Vec::new();
    let mut gen_targets: Vec<usize> = Vec::new();
    let mut switch_blocks: Vec<Var> = Vec::new();
    let mut selector_states: Vec<Var> = Vec::new();

    for (j, &(a, b)) in ex.segments.iter().enumerate() {
        let chunk = ex.gold_chunks[j];
        // Input `[bos] y_0 .. y_{b-1}`; state at input index t is h_{y_<t}.
        let mut input_ids = Vec::with_capacity(b + 1);
        input_ids.push(super::vocab::BOS);
        input_ids.extend_from_slice(&ex.summary_ids[..b]);
        let states = net::decoder_forward(p, &input_ids, chunk_states[chunk])?;

        if j == 0 {
            selector_states.push(tape.slice_rows(states, 0, 1)?);
        }
        if j + 1 < n_segments {
            // h_{y_<b} under this segment's chunk feeds the next selection.
            selector_states.push(tape.slice_rows(states, b, b + 1)?);
        }

        // Generation logits for y_a .. y_{b-1}, plus [sep] after the last
        // segment.
        let block = tape.slice_rows(states, a, b)?;
        gen_blocks.push(net::output_logits(p, block)?);
        gen_targets.extend_from_slice(&ex.summary_ids[a..b]);
        if j + 1 == n_segments {
            let last = tape.slice_rows(states, b, b + 1)?;
            gen_blocks.push(net::output_logits(p, last)?);
            gen_targets.push(SEP);
        }

        // Switch probabilities for each position of the segment: state
        // h_{y_<t} paired with the gold token embedding E(y_t).
        let seg_states = tape.slice_rows(states, a, b)?;
        let seg_embs = tape.embedding_lookup(p.var("embed.tok"), &ex.summary_ids[a..b])?;
        let logits = net::switch_logit(p, seg_states, seg_embs)?;
        switch_blocks.push(tape.sigmoid(logits)?);
    }

    // Selector rows over all chunks for every segment.
    let mut score_rows = Vec::with_capacity(n_segments);
    for state in &selector_states {
        score_rows.push(net::selector_scores(p, &chunk_vecs, &importances, *state)?);
    }
    let scores = tape.stack_rows(&score_rows)?;
    let selector_ce = tape.cross_entropy_sum(scores, &ex.gold_chunks)?;
    let probs = tape.softmax_rows(scores)?;
    let reg = regularizer_var(tape, probs)?;

    let gen_logits = tape.stack_rows(&gen_blocks)?;
    let gen_sum = tape.cross_entropy_sum(gen_logits, &gen_targets)?;
    let generation = tape.scale(gen_sum, 1.0 / gen_targets.len() as f64)?;

    let switch_probs = tape.stack_rows(&switch_blocks)?;
    let labels: Vec<f64> = ex
        .switch_labels
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    debug_assert_eq!(labels.len(), n_tokens);
    let switch_bce = tape.binary_cross_entropy_mean(switch_probs, &labels)?;

    let sel_total = tape.add(selector_ce, tape.scale(reg, cfg.alpha)?)?;
    let mut total = tape.scale(generation, cfg.lambda_gen)?;
    total = tape.add(total, tape.scale(sel_total, cfg.lambda_sel)?)?;
    total = tape.add(total, tape.scale(switch_bce, cfg.lambda_switch)?)?;

    Ok(EpisodeForward {
        total,
        generation,
        selector_ce,
        regularizer: reg,
        switch_bce,
        selector_score_rows: scores,
        switch_probs,
    })
}

/// One teacher-forced gradient step over a batch of episodes. Losses are
/// averaged over the batch; parameters are updated in place.
pub fn training_step(
    params: &mut ModelParams,
    optimizer: &mut AdamW,
    batch: &[TrainExample],
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::LengthMismatch {
            detail: "empty training batch".into(),
        });
    }
    let tape = Tape::new();
    let bound = BoundParams::trainable(&tape, params);
    let mut totals = Vec::with_capacity(batch.len());
    let mut report = LossReport {
        total: 0.0,
        generation: 0.0,
        selector_ce: 0.0,
        regularizer: 0.0,
        switch_bce: 0.0,
    };
    for ex in batch {
        let fwd = forward_episode(&bound, ex)?;
        report.generation += tape.item(fwd.generation);
        report.selector_ce += tape.item(fwd.selector_ce);
        report.regularizer += tape.item(fwd.regularizer);
        report.switch_bce += tape.item(fwd.switch_bce);
        totals.push(fwd.total);
    }
    let stacked = tape.stack_rows(&totals)?;
    let loss = tape.scale(tape.sum_all(stacked)?, 1.0 / batch.len() as f64)?;
    report.total = tape.item(loss);
    let k = batch.len() as f64;
    report.generation /= k;
    report.selector_ce /= k;
    report.regularizer /= k;
    report.switch_bce /= k;

    let bound_vars = bound.bound_vars();
    drop(bound);
    let grads = tape.backward(loss)?;
    let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
    for (name, var) in bound_vars {
        if let Some(g) = grads.get(var) {
            by_name.insert(name, g.clone());
        }
    }
    optimizer.step(&mut params.set, &by_name);
    Ok(report)
}

/// Teacher-forced predictions for evaluation: argmax selector chunk per
/// segment and thresholded switch decisions per token.
pub fn evaluate_teacher_forced(
    params: &ModelParams,
    ex: &TrainExample,
    switch_threshold: f64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let fwd = forward_episode(&bound, ex)?;
    let scores = tape.value(fwd.selector_score_rows);
    let mut predicted_chunks = Vec::with_capacity(ex.segments.len());
    for r in 0..scores.rows() {
        let row = scores.row_slice(r);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        predicted_chunks.push(best);
    }
    let probs = tape.value(fwd.switch_probs);
    let predicted_switch = probs.data().iter().map(|&p| p > switch_threshold).collect();
    Ok((predicted_chunks, predicted_switch))
}

/// Outcome of importance pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub steps: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Set when every label has the same class.
    pub single_class_warning: bool,
}

fn ffn1_only(name: &str) -> bool {
    name.starts_with("sel.ffn1")
}

/// Train the importance head as a binary classifier on fixed chunk vectors.
/// Labels with a single class still train, with a warning in the report.
pub fn pretrain_importance_on_vectors(
    params: &mut ModelParams,
    vectors: &[Tensor],
    labels: &[bool],
    steps: usize,
    learning_rate: f64,
) -> Result<PretrainReport> {
    if vectors.len() != labels.len() {
        return Err(Error::LengthMismatch {
            detail: format!("{} vectors for {} labels", vectors.len(), labels.len()),
        });
    }
    if vectors.is_empty() {
        return Err(Error::LengthMismatch {
            detail: "no pretraining examples".into(),
        });
    }
    let single_class_warning = labels.iter().all(|&l| l) || labels.iter().all(|&l| !l);
    let d = params.config.d_model;
    let mut stacked = Tensor::zeros(vectors.len(), d);
    for (r, v) in vectors.iter().enumerate() {
        assert_eq!(v.shape(), (1, d), "chunk vectors must be (1, d_model)");
        for c in 0..d {
            stacked.set(r, c, v.get(0, c));
        }
    }
    let targets: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut opt = AdamW::new(learning_rate, 0.0);
    let mut final_loss = f64::NAN;
    for _ in 0..steps {
        let tape = Tape::new();
        let bound = BoundParams::with_predicate(&tape, params, ffn1_only);
        let x = tape.constant(&stacked);
        let logits = net::head(&bound, "sel.ffn1", x)?;
        let probs = tape.sigmoid(logits)?;
        let loss = tape.binary_cross_entropy_mean(probs, &targets)?;
        final_loss = tape.item(loss);
        let bound_vars = bound.bound_vars();
        drop(bound);
        let grads = tape.backward(loss)?;
        let mut by_name = BTreeMap::new();
        for (name, var) in bound_vars {
            if let Some(g) = grads.get(var) {
                by_name.insert(name, g.clone());
            }
        }
        opt.step(&mut params.set, &by_name);
    }
    let final_accuracy = importance_accuracy(params, &stacked, labels)?;
    Ok(PretrainReport {
        steps,
        final_loss,
        final_accuracy,
        single_class_warning,
    })
}

fn importance_accuracy(params: &ModelParams, stacked: &Tensor, labels: &[bool]) -> Result<f64> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let x = tape.constant(stacked);
    let logits = net::head(&bound, "sel.ffn1", x)?;
    let probs = tape.sigmoid(logits)?;
    let vals = tape.value(probs);
    let hits = vals
        .data()
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p > 0.5) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Importance score of one chunk vector under the current head.
pub fn importance_score(params: &ModelParams, vector: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let x = tape.constant(vector);
    let logit = net::head(&bound, "sel.ffn1", x)?;
    Ok(tape.item(logit))
}

/// Pretrain the importance head from raw chunk token ids. With
/// `update_encoder` the encoder trains jointly; otherwise chunk vectors are
/// computed once under the frozen encoder.
pub fn pretrain_importance_on_chunks(
    params: &mut ModelParams,
    examples: &[(Vec<usize>, bool)],
    steps: usize,
    learning_rate: f64,
    update_encoder: bool,
) -> Result<PretrainReport> {
    if examples.is_empty() {
        return Err(Error::LengthMismatch {
            detail: "no pretraining examples".into(),
        });
    }
    if !update_encoder {
        let mut vectors = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        for (ids, label) in examples {
            vectors.push(encode_chunk_vector(params, ids)?);
            labels.push(*label);
        }
        return pretrain_importance_on_vectors(params, &vectors, &labels, steps, learning_rate);
    }

    let labels: Vec<bool> = examples.iter().map(|(_, l)| *l).collect();
    let targets: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let single_class_warning = labels.iter().all(|&l| l) || labels.iter().all(|&l| !l);
    let trainable =
        |name: &str| ffn1_only(name) || name.starts_with("enc.") || name.starts_with("embed.");
    let mut opt = AdamW::new(learning_rate, 0.0);
    let mut final_loss = f64::NAN;
    for _ in 0..steps {
        let tape = Tape::new();
        let bound = BoundParams::with_predicate(&tape, params, trainable);
        let mut logit_rows = Vec::with_capacity(examples.len());
        for (ids, _) in examples {
            let states = net::encode_chunk(&bound, ids)?;
            let vec = net::chunk_vector(&bound, states)?;
            logit_rows.push(net::importance(&bound, vec)?);
        }
        let logits = tape.stack_rows(&logit_rows)?;
        let probs = tape.sigmoid(logits)?;
        let loss = tape.binary_cross_entropy_mean(probs, &targets)?;
        final_loss = tape.item(loss);
        let bound_vars = bound.bound_vars();
        drop(bound);
        let grads = tape.backward(loss)?;
        let mut by_name = BTreeMap::new();
        for (name, var) in bound_vars {
            if let Some(g) = grads.get(var) {
                by_name.insert(name, g.clone());
            }
        }
        opt.step(&mut params.set, &by_name);
    }
    // Final accuracy under the (possibly updated) encoder.
    let mut stacked = Tensor::zeros(examples.len(), params.config.d_model);
    for (r, (ids, _)) in examples.iter().enumerate() {
        let v = encode_chunk_vector(params, ids)?;
        for c in 0..params.config.d_model {
            stacked.set(r, c, v.get(0, c));
        }
    }
    let final_accuracy = importance_accuracy(params, &stacked, &labels)?;
    Ok(PretrainReport {
        steps,
        final_loss,
        final_accuracy,
        single_class_warning,
    })
}

/// Mean-pooled encoder vector for a chunk, as a plain tensor.
pub fn encode_chunk_vector(params: &ModelParams, ids: &[usize]) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = BoundParams::frozen(&tape, params);
    let states = net::encode_chunk(&bound, ids)?;
    let vec = net::chunk_vector(&bound, states)?;
    Ok((*tape.value(vec)).clone())
}
