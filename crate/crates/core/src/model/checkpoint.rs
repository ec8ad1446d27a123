//! Versioned JSON checkpoint: config, vocabulary, and every parameter
//! tensor by name. The format is stable across runs; loading validates the
//! version and rebuilds derived state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::config::ModelConfig;
use super::params::{ModelParams, ParamSet};
use super::vocab::Vocab;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    params: ParamSet,
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        vocab: params.vocab.words().to_vec(),
        params: params.set.clone(),
    };
    let json = serde_json::to_string(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    file.config.validate()?;
    if file.vocab.len() != file.config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocab length {} does not match config vocab_size {}",
            file.vocab.len(),
            file.config.vocab_size
        )));
    }
    let vocab = Vocab::from_words(file.vocab);
    let params = ModelParams {
        config: file.config,
        vocab,
        set: file.params,
    };
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NonFiniteParams { tensor: name });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::ModelParams;
    use crate::model::vocab::Vocab;
    use crate::textproc::{Document, Stopwords};

    #[test]
    fn round_trip_preserves_everything() {
        let stops = Stopwords::builtin();
        let doc = Document::parse("alpha beta gamma delta .", &stops);
        let vocab = Vocab::build([&doc]);
        let cfg = ModelConfig {
            d_model: 8,
            attention_heads: 2,
            max_positions: 16,
            seed: 7,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(cfg, vocab).unwrap();
        let dir = std::env::temp_dir().join("groundsum-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save(&params, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.config, params.config);
        assert_eq!(loaded.vocab.words(), params.vocab.words());
        for ((na, ta), (nb, tb)) in loaded.set.iter().zip(params.set.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = std::env::temp_dir().join("groundsum-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-version.json");
        std::fs::write(
            &path,
            r#"{"version":99,"config":{},"vocab":[],"params":{"tensors":{}}}"#,
        )
        .unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
        std::fs::remove_file(&path).ok();
    }
}
