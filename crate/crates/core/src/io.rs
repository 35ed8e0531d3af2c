//! File formats: JSON-lines datasets, lexicon and taxonomy-map JSON,
//! and benchmark files. Everything is UTF-8 and written in a stable
//! order so identical inputs produce byte-identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{Dataset, EmotionClass, HashtagLexicon, LabeledMessage, RawMessage};
use crate::error::{Error, Result};
use crate::eval::{BenchmarkClass, BenchmarkItem, BenchmarkTaxonomyMap};

pub fn read_raw_messages(path: &Path) -> Result<Vec<RawMessage>> {
    read_jsonl(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Ok(Dataset { messages: read_jsonl::<LabeledMessage>(path)? })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_jsonl(path, &dataset.messages)
}

pub fn read_benchmark(path: &Path) -> Result<Vec<BenchmarkItem>> {
    read_jsonl(path)
}

pub fn read_lexicon(path: &Path) -> Result<HashtagLexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_lexicon(path: &Path, lexicon: &HashtagLexicon) -> Result<()> {
    let json = serde_json::to_string_pretty(lexicon).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Taxonomy map file: benchmark class -> array of quadrant labels.
pub fn read_taxonomy_map(path: &Path) -> Result<BenchmarkTaxonomyMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<BenchmarkClass, BTreeSet<EmotionClass>> =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok(BenchmarkTaxonomyMap::new(raw))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl_items<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(path, items)
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
