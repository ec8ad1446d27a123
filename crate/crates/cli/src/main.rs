use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use groundsum_cli::config::{Overrides, RunConfig};
use groundsum_cli::{html, pipeline};

/// Grounded transcript summarization pipeline.
#[derive(Parser)]
#[command(name = "groundsum", version, about)]
struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic episode corpus with planted groundings.
    Synth {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Clean summaries, drop uninformative sentences, accept episodes.
    Filter {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Filter-report JSONL sidecar.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
    /// Align summary sentences to transcript chunks (gold labels).
    Align {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Initialize a model and pretrain the chunk-importance head.
    Pretrain {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        alignments: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train generator, selector, and switch predictor with teacher forcing.
    Train {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        alignments: PathBuf,
        /// Resume from an existing checkpoint (e.g. the pretrain output).
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Decode grounded summaries with beam search.
    Generate {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score generated summaries and write a metrics report.
    Eval {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        generated: PathBuf,
        /// Enables teacher-forced selection metrics together with --checkpoint.
        #[arg(long, value_name = "FILE")]
        alignments: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Render the static HTML grounding report.
    RenderHtml {
        #[arg(long, value_name = "FILE")]
        episodes: PathBuf,
        #[arg(long, value_name = "FILE")]
        generated: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;

    match &cli.command {
        Command::Synth { out } => {
            let n = pipeline::run_synth(&cfg, out)?;
            eprintln!("synth: wrote {n} episodes to {}", out.display());
        }
        Command::Filter {
            episodes,
            out,
            report,
        } => {
            let (kept, total) = pipeline::run_filter(&cfg, episodes, out, report)?;
            eprintln!("filter: accepted {kept}/{total} episodes");
        }
        Command::Align { episodes, out } => {
            let n = pipeline::run_align(&cfg, episodes, out)?;
            eprintln!("align: wrote {n} alignment records to {}", out.display());
        }
        Command::Pretrain {
            episodes,
            alignments,
            out,
        } => {
            pipeline::run_pretrain(&cfg, episodes, alignments, out)?;
            eprintln!("pretrain: checkpoint at {}", out.display());
        }
        Command::Train {
            episodes,
            alignments,
            checkpoint,
            out,
        } => {
            pipeline::run_train(&cfg, episodes, alignments, checkpoint.as_deref(), out)?;
            eprintln!("train: checkpoint at {}", out.display());
        }
        Command::Generate {
            episodes,
            checkpoint,
            out,
        } => {
            let n = pipeline::run_generate(&cfg, episodes, checkpoint, out)?;
            eprintln!(
                "generate: wrote {n} grounded summaries to {}",
                out.display()
            );
        }
        Command::Eval {
            episodes,
            generated,
            alignments,
            checkpoint,
            out,
        } => {
            let report = pipeline::run_eval(
                &cfg,
                episodes,
                generated,
                alignments.as_deref(),
                checkpoint.as_deref(),
                out,
            )?;
            eprintln!(
                "eval: {} episodes, rouge1 F {:.4}, metrics at {}",
                report.corpus.episodes,
                report.corpus.rouge1.f1,
                out.display()
            );
        }
        Command::RenderHtml {
            episodes,
            generated,
            out,
        } => {
            let n = html::run_render_html(&cfg, episodes, generated, out)?;
            eprintln!("render-html: {n} episodes at {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
