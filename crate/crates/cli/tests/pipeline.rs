//! End-to-end pipeline integration: stage artifacts, strict parsing, and
//! the HTML report.

use std::path::PathBuf;

use groundsum_cli::config::RunConfig;
use groundsum_cli::formats::{self, Episode};
use groundsum_cli::{html, pipeline};

use groundsum::chunker::{ChunkUnit, ChunkingConfig};

fn small_cfg() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.chunking = ChunkingConfig::new(ChunkUnit::Sentences, 3, 3).unwrap();
    cfg.synth.seed = 5;
    cfg.synth.n_episodes = 6;
    cfg.synth.chunks_per_episode = 4;
    cfg.synth.summary_segments = 3;
    cfg.synth.noise_rate = 0.05;
    cfg.synth.vocab_size = 80;
    cfg.synth.sentence_len_min = 8;
    cfg.synth.sentence_len_max = 10;
    cfg.model.d_model = 16;
    cfg.model.attention_heads = 2;
    cfg.model.encoder_layers = 1;
    cfg.model.decoder_layers = 1;
    cfg.model.lowrank_r = 4;
    cfg.model.max_positions = 64;
    cfg.model.learning_rate = 2e-3;
    cfg.train.steps = 40;
    cfg.train.batch_size = 2;
    cfg.train.pretrain_steps = 30;
    cfg.train.log_every = 0;
    cfg.decode.max_summary_tokens = 48;
    cfg
}

struct Dirs {
    root: tempfile::TempDir,
}

impl Dirs {
    fn new() -> Dirs {
        Dirs {
            root: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
}

#[test]
fn synth_align_train_generate_eval_smoke() {
    let cfg = small_cfg();
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");
    let alignments = dirs.path("alignments.jsonl");
    let pre = dirs.path("pre.json");
    let model = dirs.path("model.json");
    let generated = dirs.path("generated.jsonl");
    let metrics = dirs.path("metrics.json");

    assert_eq!(pipeline::run_synth(&cfg, &episodes).unwrap(), 6);
    assert_eq!(pipeline::run_align(&cfg, &episodes, &alignments).unwrap(), 6);
    pipeline::run_pretrain(&cfg, &episodes, &alignments, &pre).unwrap();
    pipeline::run_train(&cfg, &episodes, &alignments, Some(&pre), &model).unwrap();
    assert_eq!(
        pipeline::run_generate(&cfg, &episodes, &model, &generated).unwrap(),
        6
    );
    let report = pipeline::run_eval(
        &cfg,
        &episodes,
        &generated,
        Some(&alignments),
        Some(&model),
        &metrics,
    )
    .unwrap();
    assert_eq!(report.corpus.episodes, 6);
    assert!(report.corpus.selection.is_some());
    assert!(metrics.exists());

    // Grounding contract over all generated records.
    for record in formats::read_grounded(&generated).unwrap() {
        if let Some(first) = record.segments.first() {
            assert_eq!(first.chunk, 0, "{}", record.id);
        }
        for seg in &record.segments {
            assert!(seg.chunk < 4);
        }
    }

    // HTML report renders with resolvable anchors.
    let page = dirs.path("report.html");
    html::run_render_html(&cfg, &episodes, &generated, &page).unwrap();
    let html_text = std::fs::read_to_string(&page).unwrap();
    for record in formats::read_grounded(&generated).unwrap() {
        for seg in &record.segments {
            assert!(html_text.contains(&format!("-sent{}\"", seg.sent_range[0])));
        }
    }
    assert!(html_text.contains("</html>"));
}

#[test]
fn token_mode_overlapping_chunks_round_trip() {
    let mut cfg = small_cfg();
    // Overlapping token windows across the synthetic sentences.
    cfg.chunking = ChunkingConfig::new(ChunkUnit::Tokens, 30, 15).unwrap();
    cfg.train.steps = 20;
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");
    let alignments = dirs.path("alignments.jsonl");
    let model = dirs.path("model.json");
    let generated = dirs.path("generated.jsonl");

    pipeline::run_synth(&cfg, &episodes).unwrap();
    pipeline::run_align(&cfg, &episodes, &alignments).unwrap();
    pipeline::run_train(&cfg, &episodes, &alignments, None, &model).unwrap();
    pipeline::run_generate(&cfg, &episodes, &model, &generated).unwrap();
    let report = pipeline::run_eval(
        &cfg,
        &episodes,
        &generated,
        Some(&alignments),
        Some(&model),
        &dirs.path("metrics.json"),
    )
    .unwrap();
    assert_eq!(report.corpus.episodes, 6);
    let page = dirs.path("report.html");
    html::run_render_html(&cfg, &episodes, &generated, &page).unwrap();
    assert!(std::fs::read_to_string(&page).unwrap().contains("</html>"));
}

#[test]
fn html_renders_empty_summary_notice() {
    let cfg = small_cfg();
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");
    pipeline::run_synth(&cfg, &episodes).unwrap();
    let eps = formats::read_episodes(&episodes).unwrap();
    let records: Vec<formats::GroundedRecord> = eps
        .iter()
        .map(|ep| formats::GroundedRecord {
            id: ep.id.clone(),
            segments: vec![],
        })
        .collect();
    let generated = dirs.path("generated.jsonl");
    formats::write_grounded(&generated, &records).unwrap();
    let page = dirs.path("report.html");
    html::run_render_html(&cfg, &episodes, &generated, &page).unwrap();
    let text = std::fs::read_to_string(&page).unwrap();
    assert!(text.contains("empty summary"));
}

#[test]
fn html_rejects_out_of_range_chunk() {
    let cfg = small_cfg();
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");
    pipeline::run_synth(&cfg, &episodes).unwrap();
    let eps = formats::read_episodes(&episodes).unwrap();
    let records: Vec<formats::GroundedRecord> = eps
        .iter()
        .map(|ep| formats::GroundedRecord {
            id: ep.id.clone(),
            segments: vec![formats::SegmentRecord {
                text: "bogus".into(),
                chunk: 99,
                sent_range: [0, 3],
            }],
        })
        .collect();
    let generated = dirs.path("generated.jsonl");
    formats::write_grounded(&generated, &records).unwrap();
    let err = format!(
        "{:#}",
        html::run_render_html(&cfg, &episodes, &generated, &dirs.path("page.html")).unwrap_err()
    );
    assert!(err.contains("out of range"), "{err}");
}

#[test]
fn eval_before_generate_names_missing_file() {
    let cfg = small_cfg();
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");
    pipeline::run_synth(&cfg, &episodes).unwrap();
    let missing = dirs.path("generated.jsonl");
    let err = format!(
        "{:#}",
        pipeline::run_eval(&cfg, &episodes, &missing, None, None, &dirs.path("m.json"))
            .unwrap_err()
    );
    assert!(err.contains("generated.jsonl"), "{err}");
    assert!(err.contains("generate"), "{err}");
}

#[test]
fn filter_stage_reports_and_accepts() {
    let cfg = small_cfg();
    let dirs = Dirs::new();
    let episodes = dirs.path("episodes.jsonl");

    // A corpus where summaries repeat transcript content (alignable), plus
    // junk that the token rules remove.
    let transcript = "Quantum widgets assemble rapidly under pressure today . \
                      Crystal matrices vibrate slowly inside the chamber now . \
                      Plasma currents flow strongly around the reactor core ."
        .to_string();
    let eps = vec![
        Episode {
            id: "keep".into(),
            transcript: transcript.clone(),
            description: "Quantum widgets assemble rapidly under pressure today \
                          with spare parts . Visit https://promo.example #ad"
                .into(),
        },
        Episode {
            id: "short".into(),
            transcript,
            description: "Too tiny .".into(),
        },
    ];
    formats::write_episodes(&episodes, &eps).unwrap();

    let out = dirs.path("filtered.jsonl");
    let report_path = dirs.path("report.jsonl");
    let mut cfg = cfg;
    // Keep the salience filter permissive: this test exercises cleanup and
    // acceptance.
    cfg.filter.sentence_salience_min = 0.0;
    let (kept, total) = pipeline::run_filter(&cfg, &episodes, &out, &report_path).unwrap();
    assert_eq!(total, 2);
    assert_eq!(kept, 1);
    let survivors = formats::read_episodes(&out).unwrap();
    assert_eq!(survivors.len(), 1);
    assert_eq!(survivors[0].id, "keep");
    assert!(!survivors[0].description.contains("https://"));
    assert!(!survivors[0].description.contains("#ad"));

    let reports = std::fs::read_to_string(&report_path).unwrap();
    assert!(reports.contains("too_short"));
}

#[test]
fn binary_accepts_dotted_config_flags() {
    let dirs = Dirs::new();
    let out = dirs.path("episodes.jsonl");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_groundsum"))
        .args([
            "synth",
            "--out",
            out.to_str().unwrap(),
            "--synth.seed",
            "4",
            "--synth.n_episodes",
            "3",
            "--synth.chunks_per_episode",
            "4",
            "--synth.summary_segments",
            "2",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(formats::read_episodes(&out).unwrap().len(), 3);

    // Malformed flag values fail with a nonzero exit.
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_groundsum"))
        .args(["synth", "--out", out.to_str().unwrap(), "--synth.seed", "not-a-number"])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn run_config_round_trips_through_file() {
    let dirs = Dirs::new();
    let path = dirs.path("config.json");
    let mut cfg = small_cfg();
    cfg.model.alpha = 0.7;
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let loaded = RunConfig::load(&path).unwrap();
    assert_eq!(loaded, cfg);
}
