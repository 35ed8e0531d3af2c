//! On-disk model bundle: one directory holding the encoder and head
//! checkpoints, their configs, the vocabulary, and a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{HeadConfig, Model};
use crate::autodiff::checkpoint;
use crate::encoder::{validate_params, EncoderConfig};
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

const FORMAT: &str = "emotex-model/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    files: BTreeMap<String, String>,
}

fn manifest_files() -> BTreeMap<String, String> {
    [
        ("encoder_config", "encoder.json"),
        ("encoder", "encoder.ckpt"),
        ("head_config", "head.json"),
        ("head", "head.ckpt"),
        ("vocab", "vocab.json"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn save(dir: &Path, model: &Model, vocab: &Vocabulary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.encoder_config.save(&dir.join("encoder.json"))?;
    checkpoint::save(&dir.join("encoder.ckpt"), &model.encoder)?;
    crate::io::write_json_pretty(&dir.join("head.json"), &model.head_config)?;
    checkpoint::save(&dir.join("head.ckpt"), &model.head)?;
    vocab.save(&dir.join("vocab.json"))?;
    let manifest = Manifest { format: FORMAT.to_string(), files: manifest_files() };
    crate::io::write_json_pretty(&dir.join("manifest.json"), &manifest)
}

pub fn load(dir: &Path) -> Result<(Model, Vocabulary)> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    if manifest.format != FORMAT {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported bundle format {}",
            manifest.format
        )));
    }
    let file = |key: &str| -> Result<std::path::PathBuf> {
        manifest
            .files
            .get(key)
            .map(|f| dir.join(f))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("manifest missing entry {key}")))
    };
    let encoder_config = EncoderConfig::load(&file("encoder_config")?)?;
    let encoder = checkpoint::load(&file("encoder")?)?;
    validate_params(&encoder_config, &encoder)?;
    let head_path = file("head_config")?;
    let head_text = std::fs::read_to_string(&head_path).map_err(|e| Error::io(&head_path, e))?;
    let head_config: HeadConfig =
        serde_json::from_str(&head_text).map_err(|e| Error::json(&head_path, e))?;
    head_config.validate()?;
    let head = checkpoint::load(&file("head")?)?;
    let vocab = Vocabulary::load(&file("vocab")?)?;
    if vocab.size() != encoder_config.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary size {} vs encoder config {}",
            vocab.size(),
            encoder_config.vocab_size
        )));
    }
    Ok((Model::new(encoder_config, encoder, head_config, head), vocab))
}
