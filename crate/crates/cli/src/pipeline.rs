//! Pipeline stages: synth, filter, align, pretrain, train, generate, eval.
//! Each stage reads its declared inputs, writes its declared outputs, and is
//! individually re-runnable; seeds live in the config echoed into outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use groundsum::aligner::{align_summary, Fallback, GroundingAlignment};
use groundsum::chunker::{chunk, Chunk};
use groundsum::datafilter::{accept_episode, clean_summary_tokens, filter_summary_sentences};
use groundsum::decode::{self, check_grounding_contract};
use groundsum::evalkit::{
    front_half_fraction, ngram_reuse, rouge_l, rouge_n, selection_metrics, RougeScore,
    SelectionExample,
};
use groundsum::model::{
    self, checkpoint, AdamW, ModelParams, TrainExample, Vocab,
};
use groundsum::synthcorpus::generate_corpus;
use groundsum::textproc::{build_idf, Document, Stopwords};

use crate::config::RunConfig;
use crate::formats::{
    self, AlignmentRecord, Episode, FilterRecord, GroundedRecord, SegmentRecord,
};

fn parse_doc(raw: &str, stopwords: &Stopwords) -> Document {
    Document::parse(raw, stopwords)
}

fn chunks_for(transcript: &Document, cfg: &RunConfig) -> Result<Vec<Chunk>> {
    Ok(chunk(transcript, &cfg.chunking)?)
}

fn fallback_name(f: Fallback) -> &'static str {
    match f {
        Fallback::None => "none",
        Fallback::FirstChunk => "first_chunk",
        Fallback::PreviousChunk => "previous_chunk",
    }
}

fn group_switch_labels(summary: &Document, flat: &[bool]) -> Vec<Vec<bool>> {
    summary
        .sentences
        .iter()
        .map(|&(s, e)| flat[s..e].to_vec())
        .collect()
}

fn alignment_from_record(record: &AlignmentRecord) -> GroundingAlignment {
    GroundingAlignment {
        gold_chunks: record.gold_chunks.clone(),
        coverage_scores: vec![0.0; record.gold_chunks.len()],
        fallbacks: record
            .fallbacks
            .iter()
            .map(|s| match s.as_str() {
                "first_chunk" => Fallback::FirstChunk,
                "previous_chunk" => Fallback::PreviousChunk,
                _ => Fallback::None,
            })
            .collect(),
        switch_labels: record.switch_labels.iter().flatten().copied().collect(),
        importance_labels: record.importance_labels.clone(),
    }
}

/// Generate a synthetic corpus and write it as episode JSONL.
pub fn run_synth(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let episodes: Vec<Episode> = generate_corpus(&cfg.synth)?
        .into_iter()
        .map(|ep| Episode {
            id: ep.id,
            transcript: ep.transcript.raw,
            description: ep.summary.raw,
        })
        .collect();
    formats::write_episodes(out, &episodes)?;
    Ok(episodes.len())
}

/// Token cleanup, IDF sentence filtering, and episode acceptance. Accepted
/// episodes keep the filtered description text.
pub fn run_filter(
    cfg: &RunConfig,
    episodes_path: &Path,
    out: &Path,
    report_out: &Path,
) -> Result<(usize, usize)> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;

    let mut cleaned = Vec::with_capacity(episodes.len());
    for ep in &episodes {
        let summary = parse_doc(&ep.description, &stopwords);
        let (doc, report) = clean_summary_tokens(&summary, &cfg.filter, &stopwords);
        cleaned.push((doc, report));
    }
    let idf = build_idf(
        &cleaned
            .iter()
            .map(|(d, _)| d.clone())
            .collect::<Vec<_>>(),
    )?;

    let mut kept = Vec::new();
    let mut reports = Vec::new();
    for (ep, (clean_doc, clean_report)) in episodes.iter().zip(cleaned) {
        let (filtered, sent_report) =
            filter_summary_sentences(&clean_doc, &idf, &cfg.filter, &stopwords);
        let mut record = FilterRecord {
            episode_id: ep.id.clone(),
            urls_removed: clean_report.urls_removed,
            emails_removed: clean_report.emails_removed,
            mentions_removed: clean_report.mentions_removed,
            hashtags_removed: clean_report.hashtags_removed,
            overlong_removed: clean_report.overlong_removed,
            sentences_removed: sent_report.sentences_removed,
            accepted: false,
            reject_reason: None,
        };
        let transcript = parse_doc(&ep.transcript, &stopwords);
        if transcript.sentences.is_empty() {
            record.reject_reason = Some("empty_transcript".into());
            reports.push(record);
            continue;
        }
        let chunks = chunks_for(&transcript, cfg)?;
        let alignment = align_summary(&chunks, &transcript, &filtered, &cfg.alignment)?;
        let (accepted, reason) =
            accept_episode(&transcript, &filtered, &chunks, &alignment, &cfg.filter);
        record.accepted = accepted;
        record.reject_reason = reason;
        if accepted {
            kept.push(Episode {
                id: ep.id.clone(),
                transcript: ep.transcript.clone(),
                description: filtered.raw.clone(),
            });
        }
        reports.push(record);
    }
    formats::write_episodes(out, &kept)?;
    formats::write_filter_reports(report_out, &reports)?;
    Ok((kept.len(), reports.len()))
}

/// Align every episode's summary to its transcript chunks.
pub fn run_align(cfg: &RunConfig, episodes_path: &Path, out: &Path) -> Result<usize> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let mut records = Vec::with_capacity(episodes.len());
    for ep in &episodes {
        let transcript = parse_doc(&ep.transcript, &stopwords);
        if transcript.sentences.is_empty() {
            bail!("episode `{}`: transcript has no sentences", ep.id);
        }
        let summary = parse_doc(&ep.description, &stopwords);
        let chunks = chunks_for(&transcript, cfg)?;
        let alignment = align_summary(&chunks, &transcript, &summary, &cfg.alignment)
            .with_context(|| format!("episode `{}`", ep.id))?;
        records.push(AlignmentRecord {
            episode_id: ep.id.clone(),
            gold_chunks: alignment.gold_chunks.clone(),
            fallbacks: alignment
                .fallbacks
                .iter()
                .map(|&f| fallback_name(f).to_string())
                .collect(),
            switch_labels: group_switch_labels(&summary, &alignment.switch_labels),
            importance_labels: alignment.importance_labels.clone(),
        });
    }
    formats::write_alignments(out, &records)?;
    Ok(records.len())
}

fn join_alignments<'a>(
    episodes: &'a [Episode],
    alignments: &'a [AlignmentRecord],
) -> Result<Vec<(&'a Episode, &'a AlignmentRecord)>> {
    let by_id: BTreeMap<&str, &AlignmentRecord> = alignments
        .iter()
        .map(|r| (r.episode_id.as_str(), r))
        .collect();
    episodes
        .iter()
        .map(|ep| {
            by_id
                .get(ep.id.as_str())
                .map(|r| (ep, *r))
                .with_context(|| {
                    format!(
                        "no alignment for episode `{}`: run `groundsum align` on this corpus",
                        ep.id
                    )
                })
        })
        .collect()
}

fn build_vocab(episodes: &[Episode], stopwords: &Stopwords) -> Vocab {
    let docs: Vec<Document> = episodes
        .iter()
        .flat_map(|ep| {
            [
                parse_doc(&ep.transcript, stopwords),
                parse_doc(&ep.description, stopwords),
            ]
        })
        .collect();
    Vocab::build(docs.iter())
}

/// Pretrain the importance head on aligner importance labels and write an
/// initialized checkpoint.
pub fn run_pretrain(
    cfg: &RunConfig,
    episodes_path: &Path,
    alignments_path: &Path,
    out: &Path,
) -> Result<()> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let alignments = formats::read_alignments(alignments_path)?;
    let joined = join_alignments(&episodes, &alignments)?;

    let vocab = build_vocab(&episodes, &stopwords);
    let mut params = ModelParams::init(cfg.model.clone(), vocab)?;

    let mut examples: Vec<(Vec<usize>, bool)> = Vec::new();
    for (ep, record) in &joined {
        let transcript = parse_doc(&ep.transcript, &stopwords);
        let chunks = chunks_for(&transcript, cfg)?;
        if record.importance_labels.len() != chunks.len() {
            bail!(
                "episode `{}`: {} importance labels for {} chunks; re-run `groundsum align` \
                 with the same chunking config",
                ep.id,
                record.importance_labels.len(),
                chunks.len()
            );
        }
        for (c, &label) in chunks.iter().zip(&record.importance_labels) {
            examples.push((params.vocab.encode(c.tokens(&transcript)), label));
        }
    }
    let report = model::pretrain_importance_on_chunks(
        &mut params,
        &examples,
        cfg.train.pretrain_steps,
        cfg.train.pretrain_learning_rate,
        cfg.train.pretrain_update_encoder,
    )?;
    if report.single_class_warning {
        eprintln!("warning: importance labels are single-class; pretraining proceeded anyway");
    }
    eprintln!(
        "pretrain: {} examples, {} steps, loss {:.4}, accuracy {:.3}",
        examples.len(),
        report.steps,
        report.final_loss,
        report.final_accuracy
    );
    checkpoint::save(&params, out)?;
    Ok(())
}

/// Teacher-forced training; resumes from `checkpoint_in` when given.
pub fn run_train(
    cfg: &RunConfig,
    episodes_path: &Path,
    alignments_path: &Path,
    checkpoint_in: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let alignments = formats::read_alignments(alignments_path)?;
    let joined = join_alignments(&episodes, &alignments)?;

    let mut params = match checkpoint_in {
        Some(path) => {
            let mut loaded = checkpoint::load(path)?;
            // Training hyperparameters come from the run config; sizes and
            // vocab stay with the checkpoint.
            loaded.config.alpha = cfg.model.alpha;
            loaded.config.lambda_gen = cfg.model.lambda_gen;
            loaded.config.lambda_sel = cfg.model.lambda_sel;
            loaded.config.lambda_switch = cfg.model.lambda_switch;
            loaded.config.learning_rate = cfg.model.learning_rate;
            loaded.config.weight_decay = cfg.model.weight_decay;
            loaded
        }
        None => ModelParams::init(cfg.model.clone(), build_vocab(&episodes, &stopwords))?,
    };

    let mut examples = Vec::with_capacity(joined.len());
    for (ep, record) in &joined {
        let transcript = parse_doc(&ep.transcript, &stopwords);
        let summary = parse_doc(&ep.description, &stopwords);
        let chunks = chunks_for(&transcript, cfg)?;
        let alignment = alignment_from_record(record);
        let ex = TrainExample::build(&transcript, &chunks, &summary, &alignment, &params.vocab)
            .with_context(|| format!("episode `{}`", ep.id))?;
        examples.push(ex);
    }
    if examples.is_empty() {
        bail!("no training examples: the episodes file is empty");
    }

    let mut opt = AdamW::new(params.config.learning_rate, params.config.weight_decay);
    let batch = cfg.train.batch_size.max(1);
    for step in 0..cfg.train.steps {
        let start = (step * batch) % examples.len();
        let mut slice = Vec::with_capacity(batch);
        for k in 0..batch {
            slice.push(examples[(start + k) % examples.len()].clone());
        }
        let report = model::training_step(&mut params, &mut opt, &slice)?;
        if cfg.train.log_every > 0 && (step + 1) % cfg.train.log_every == 0 {
            eprintln!(
                "step {:>5}: total {:.4} gen {:.4} sel {:.4} reg {:.4} switch {:.4}",
                step + 1,
                report.total,
                report.generation,
                report.selector_ce,
                report.regularizer,
                report.switch_bce
            );
        }
    }
    checkpoint::save(&params, out)?;
    Ok(())
}

/// Decode grounded summaries for every episode.
pub fn run_generate(
    cfg: &RunConfig,
    episodes_path: &Path,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<usize> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let params = checkpoint::load(checkpoint_path)?;
    let mut records = Vec::with_capacity(episodes.len());
    for ep in &episodes {
        let transcript = parse_doc(&ep.transcript, &stopwords);
        let chunks = chunks_for(&transcript, cfg)?;
        let summary = decode::generate(&chunks, &transcript, &params, &cfg.decode)
            .with_context(|| format!("episode `{}`", ep.id))?;
        debug_assert!(check_grounding_contract(&summary, chunks.len()));
        records.push(GroundedRecord {
            id: ep.id.clone(),
            segments: summary
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    text: s.text.clone(),
                    chunk: s.chunk_index,
                    sent_range: [s.sentence_range.0, s.sentence_range.1],
                })
                .collect(),
        });
    }
    formats::write_grounded(out, &records)?;
    Ok(records.len())
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MeanRouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanRouge {
    fn accumulate(&mut self, score: &RougeScore) {
        self.precision += score.precision;
        self.recall += score.recall;
        self.f1 += score.f1;
    }

    fn finish(&mut self, n: usize) {
        if n > 0 {
            self.precision /= n as f64;
            self.recall /= n as f64;
            self.f1 /= n as f64;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub chunk_accuracy: f64,
    pub switch_precision: f64,
    pub switch_recall: f64,
    pub switch_f1: f64,
    pub avg_switch_points: f64,
    pub same_chunk_rate: f64,
    pub unique_chunks_per_summary: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusMetrics {
    pub episodes: usize,
    pub rouge1: MeanRouge,
    pub rouge2: MeanRouge,
    pub rouge_l: MeanRouge,
    /// n -> mean percentage of summary n-grams found in grounding chunks.
    pub reuse_grounding: BTreeMap<usize, f64>,
    /// n -> mean percentage of summary n-grams found in the transcript.
    pub reuse_transcript: BTreeMap<usize, f64>,
    /// Pooled front-half fraction of matched trigrams, when any matched.
    pub front_half_fraction: Option<f64>,
    pub avg_segments: f64,
    pub same_chunk_rate: f64,
    pub unique_chunks_per_summary: f64,
    pub avg_backward_transitions: f64,
    /// Teacher-forced selection quality; needs alignments and a checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeMetrics {
    pub id: String,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    pub rouge_l_f: f64,
    pub segments: usize,
    pub backward_transitions: usize,
    pub reuse_grounding: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub config: RunConfig,
    pub corpus: CorpusMetrics,
    pub episodes: Vec<EpisodeMetrics>,
}

fn token_texts(doc: &Document) -> Vec<String> {
    doc.tokens.iter().map(|t| t.text.clone()).collect()
}

/// Score generated summaries against references and grounding chunks.
pub fn run_eval(
    cfg: &RunConfig,
    episodes_path: &Path,
    generated_path: &Path,
    alignments_path: Option<&Path>,
    checkpoint_path: Option<&Path>,
    out: &Path,
) -> Result<MetricsReport> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let generated = formats::read_grounded(generated_path)?;
    let by_id: BTreeMap<&str, &GroundedRecord> =
        generated.iter().map(|g| (g.id.as_str(), g)).collect();

    let mut corpus = CorpusMetrics {
        episodes: 0,
        rouge1: MeanRouge::default(),
        rouge2: MeanRouge::default(),
        rouge_l: MeanRouge::default(),
        reuse_grounding: BTreeMap::new(),
        reuse_transcript: BTreeMap::new(),
        front_half_fraction: None,
        avg_segments: 0.0,
        same_chunk_rate: 0.0,
        unique_chunks_per_summary: 0.0,
        avg_backward_transitions: 0.0,
        selection: None,
    };
    let mut per_episode = Vec::new();
    let mut front_pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let (mut transitions, mut same) = (0usize, 0usize);
    let mut unique_sum = 0usize;
    let mut reuse_acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut reuse_tr_acc: BTreeMap<usize, f64> = BTreeMap::new();

    for ep in &episodes {
        let record = by_id.get(ep.id.as_str()).with_context(|| {
            format!(
                "no generated summary for episode `{}` in `{}`",
                ep.id,
                generated_path.display()
            )
        })?;
        let transcript = parse_doc(&ep.transcript, &stopwords);
        let chunks = chunks_for(&transcript, cfg)?;
        for (i, seg) in record.segments.iter().enumerate() {
            if seg.chunk >= chunks.len() {
                bail!(
                    "episode `{}` segment {i}: chunk {} out of range ({} chunks)",
                    ep.id,
                    seg.chunk,
                    chunks.len()
                );
            }
        }

        let reference = token_texts(&parse_doc(&ep.description, &stopwords));
        let candidate: Vec<String> = record
            .segments
            .iter()
            .flat_map(|s| token_texts(&parse_doc(&s.text, &stopwords)))
            .collect();

        let r1 = rouge_n(&candidate, &reference, 1);
        let r2 = rouge_n(&candidate, &reference, 2);
        let rl = rouge_l(&candidate, &reference);
        corpus.rouge1.accumulate(&r1);
        corpus.rouge2.accumulate(&r2);
        corpus.rouge_l.accumulate(&rl);

        // Concatenate the distinct grounding chunks in order of first use.
        let mut seen = Vec::new();
        for seg in &record.segments {
            if !seen.contains(&seg.chunk) {
                seen.push(seg.chunk);
            }
        }
        let grounding_tokens: Vec<String> = seen
            .iter()
            .flat_map(|&c| {
                chunks[c]
                    .tokens(&transcript)
                    .iter()
                    .map(|t| t.text.clone())
            })
            .collect();
        let transcript_tokens = token_texts(&transcript);

        let mut ep_reuse = BTreeMap::new();
        for n in 1..=3 {
            let g = ngram_reuse(&candidate, &grounding_tokens, n);
            let t = ngram_reuse(&candidate, &transcript_tokens, n);
            ep_reuse.insert(n, g);
            *reuse_acc.entry(n).or_insert(0.0) += g;
            *reuse_tr_acc.entry(n).or_insert(0.0) += t;
        }

        for seg in &record.segments {
            front_pairs.push((
                token_texts(&parse_doc(&seg.text, &stopwords)),
                chunks[seg.chunk]
                    .tokens(&transcript)
                    .iter()
                    .map(|t| t.text.clone())
                    .collect(),
            ));
        }

        let chunk_seq: Vec<usize> = record.segments.iter().map(|s| s.chunk).collect();
        let backward = chunk_seq.windows(2).filter(|w| w[1] < w[0]).count();
        for w in chunk_seq.windows(2) {
            transitions += 1;
            if w[0] == w[1] {
                same += 1;
            }
        }
        unique_sum += chunk_seq
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        corpus.avg_segments += record.segments.len() as f64;
        corpus.avg_backward_transitions += backward as f64;

        per_episode.push(EpisodeMetrics {
            id: ep.id.clone(),
            rouge1_f: r1.f1,
            rouge2_f: r2.f1,
            rouge_l_f: rl.f1,
            segments: record.segments.len(),
            backward_transitions: backward,
            reuse_grounding: ep_reuse,
        });
    }

    let n = episodes.len();
    corpus.episodes = n;
    corpus.rouge1.finish(n);
    corpus.rouge2.finish(n);
    corpus.rouge_l.finish(n);
    if n > 0 {
        corpus.avg_segments /= n as f64;
        corpus.avg_backward_transitions /= n as f64;
        corpus.unique_chunks_per_summary = unique_sum as f64 / n as f64;
        for (k, v) in reuse_acc {
            corpus.reuse_grounding.insert(k, v / n as f64);
        }
        for (k, v) in reuse_tr_acc {
            corpus.reuse_transcript.insert(k, v / n as f64);
        }
    }
    corpus.same_chunk_rate = if transitions > 0 {
        same as f64 / transitions as f64
    } else {
        0.0
    };
    corpus.front_half_fraction = front_half_fraction(&front_pairs, 3);

    if let (Some(al_path), Some(ck_path)) = (alignments_path, checkpoint_path) {
        let alignments = formats::read_alignments(al_path)?;
        let joined = join_alignments(&episodes, &alignments)?;
        let params = checkpoint::load(ck_path)?;
        let mut examples = Vec::new();
        for (ep, record) in &joined {
            let transcript = parse_doc(&ep.transcript, &stopwords);
            let summary = parse_doc(&ep.description, &stopwords);
            if summary.sentences.is_empty() {
                continue;
            }
            let chunks = chunks_for(&transcript, cfg)?;
            let alignment = alignment_from_record(record);
            let ex =
                TrainExample::build(&transcript, &chunks, &summary, &alignment, &params.vocab)?;
            let (pred_chunks, pred_switch) =
                model::evaluate_teacher_forced(&params, &ex, cfg.decode.switch_threshold)?;
            examples.push(SelectionExample {
                predicted_chunks: pred_chunks,
                gold_chunks: ex.gold_chunks.clone(),
                predicted_switch: pred_switch,
                gold_switch: ex.switch_labels.clone(),
            });
        }
        let stats = selection_metrics(&examples)?;
        corpus.selection = Some(SelectionReport {
            chunk_accuracy: stats.chunk_accuracy,
            switch_precision: stats.switch_precision,
            switch_recall: stats.switch_recall,
            switch_f1: stats.switch_f1,
            avg_switch_points: stats.avg_switch_points,
            same_chunk_rate: stats.same_chunk_rate,
            unique_chunks_per_summary: stats.unique_chunks_per_summary,
        });
    }

    let report = MetricsReport {
        config: cfg.clone(),
        corpus,
        episodes: per_episode,
    };
    formats::write_metrics(out, &report)?;
    Ok(report)
}
