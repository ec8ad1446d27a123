//! JSONL artifact formats shared by the pipeline stages. Parsing is strict:
//! malformed lines, unknown fields, missing fields, and duplicate ids are
//! reported with their line number.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One episode: a transcript plus the creator-provided description used as
/// the reference summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub id: String,
    pub transcript: String,
    pub description: String,
}

/// Gold grounding decisions for one episode, with switch labels grouped by
/// summary sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentRecord {
    pub episode_id: String,
    pub gold_chunks: Vec<usize>,
    pub fallbacks: Vec<String>,
    pub switch_labels: Vec<Vec<bool>>,
    pub importance_labels: Vec<bool>,
}

/// One generated summary segment tethered to its chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub text: String,
    pub chunk: usize,
    pub sent_range: [usize; 2],
}

/// A generated grounded summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundedRecord {
    pub id: String,
    pub segments: Vec<SegmentRecord>,
}

/// Filtering outcome for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRecord {
    pub episode_id: String,
    pub urls_removed: usize,
    pub emails_removed: usize,
    pub mentions_removed: usize,
    pub hashtags_removed: usize,
    pub overlong_removed: usize,
    pub sentences_removed: usize,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reject_reason: Option<String>,
}

fn open_for_read(path: &Path, stage_hint: &str) -> Result<BufReader<File>> {
    let file = File::open(path)
        .with_context(|| format!("missing artifact `{}`: {stage_hint}", path.display()))?;
    Ok(BufReader::new(file))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, stage_hint: &str) -> Result<Vec<T>> {
    let reader = open_for_read(path, stage_hint)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create `{}`", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Strict episode reader: unique non-empty ids, one JSON object per line.
pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let reader = open_for_read(path, "an episodes JSONL file is required")?;
    let mut out: Vec<Episode> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed episode", path.display(), i + 1))?;
        if ep.id.is_empty() {
            bail!("{}:{}: episode id must be non-empty", path.display(), i + 1);
        }
        if !seen.insert(ep.id.clone()) {
            bail!(
                "{}:{}: duplicate episode id `{}`",
                path.display(),
                i + 1,
                ep.id
            );
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    write_jsonl(path, episodes)
}

pub fn read_alignments(path: &Path) -> Result<Vec<AlignmentRecord>> {
    read_jsonl(path, "run `groundsum align` first")
}

pub fn write_alignments(path: &Path, records: &[AlignmentRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_grounded(path: &Path) -> Result<Vec<GroundedRecord>> {
    read_jsonl(path, "run `groundsum generate` first")
}

pub fn write_grounded(path: &Path, records: &[GroundedRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn write_filter_reports(path: &Path, records: &[FilterRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Write the metrics document with a trailing newline.
pub fn write_metrics<T: Serialize>(path: &Path, metrics: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(metrics)?;
    std::fs::write(path, format!("{json}\n"))
        .with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("groundsum-formats");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn episode_round_trip() {
        let path = tmp("ok.jsonl");
        let eps = vec![
            Episode {
                id: "a".into(),
                transcript: "T one".into(),
                description: "D one".into(),
            },
            Episode {
                id: "b".into(),
                transcript: "T two".into(),
                description: "D two".into(),
            },
        ];
        write_episodes(&path, &eps).unwrap();
        assert_eq!(read_episodes(&path).unwrap(), eps);
    }

    #[test]
    fn duplicate_id_names_line() {
        let path = tmp("dup.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"x\",\"transcript\":\"t\",\"description\":\"d\"}\n{\"id\":\"x\",\"transcript\":\"t\",\"description\":\"d\"}\n",
        )
        .unwrap();
        let err = read_episodes(&path).unwrap_err().to_string();
        assert!(err.contains(":2"), "{err}");
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn malformed_line_names_line() {
        let path = tmp("bad.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"x\",\"transcript\":\"t\",\"description\":\"d\"}\nnot json\n",
        )
        .unwrap();
        let err = format!("{:#}", read_episodes(&path).unwrap_err());
        assert!(err.contains(":2"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let path = tmp("unknown.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"x\",\"transcript\":\"t\",\"description\":\"d\",\"extra\":1}\n",
        )
        .unwrap();
        assert!(read_episodes(&path).is_err());
    }

    #[test]
    fn missing_artifact_names_file() {
        let path = tmp("never-written.jsonl");
        std::fs::remove_file(&path).ok();
        let err = format!("{:#}", read_grounded(&path).unwrap_err());
        assert!(err.contains("never-written.jsonl"), "{err}");
        assert!(err.contains("generate"), "{err}");
    }
}
