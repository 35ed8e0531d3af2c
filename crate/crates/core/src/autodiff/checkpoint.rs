//! Tensor checkpoint files: a little-endian u64 header length, a JSON
//! manifest of (name, shape) entries, then the concatenated values as
//! little-endian 64-bit floats in manifest order. Round trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::params::Parameters;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn save(path: &Path, params: &Parameters) -> Result<()> {
    let manifest: Vec<ManifestEntry> = params
        .iter()
        .map(|(name, t)| ManifestEntry { name: name.to_string(), shape: t.shape().to_vec() })
        .collect();
    let header = serde_json::to_vec(&manifest).map_err(|e| Error::json(path, e))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for (_, t) in params.iter() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Parameters> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf).map_err(|e| Error::io(path, e))?;
    let header_len = u64::from_le_bytes(len_buf) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&header).map_err(|e| Error::json(path, e))?;
    let mut params = Parameters::new();
    for entry in manifest {
        let count: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            data.push(f64::from_le_bytes(buf));
        }
        params.push(entry.name, Tensor::from_vec(&entry.shape, data)?);
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => Ok(params),
        Ok(_) => Err(Error::CorruptCheckpoint(format!(
            "{}: trailing bytes after tensor data",
            path.display()
        ))),
        Err(e) => Err(Error::io(path, e)),
    }
}
