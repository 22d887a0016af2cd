//! Checkpoints are a pair of files: `checkpoint_<epoch>.bin` holds every
//! parameter as little-endian f64 in manifest order, and
//! `checkpoint_<epoch>.json` is the manifest (config plus name, shape and
//! byte offset of each parameter).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LogloModel, ModelConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "loglo-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    epoch: usize,
    config: ModelConfig,
    blob: String,
    total_bytes: usize,
    params: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: LogloModel,
    pub epoch: usize,
}

pub fn checkpoint_paths(dir: &Path, epoch: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("checkpoint_{epoch}.bin")),
        dir.join(format!("checkpoint_{epoch}.json")),
    )
}

/// Writes the blob and manifest for `model` into `dir`; returns the blob path.
pub fn save_checkpoint(model: &LogloModel, dir: &Path, epoch: usize) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (blob_path, manifest_path) = checkpoint_paths(dir, epoch);
    let mut bytes = Vec::new();
    let mut params = Vec::with_capacity(model.params().len());
    for p in model.params() {
        params.push(Entry {
            name: p.name.clone(),
            shape: p.tensor.shape.clone(),
            offset: bytes.len(),
            len: p.tensor.numel(),
        });
        for v in &p.tensor.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        epoch,
        config: model.config().clone(),
        blob: blob_path.file_name().unwrap().to_string_lossy().into_owned(),
        total_bytes: bytes.len(),
        params,
    };
    fs::write(&blob_path, &bytes).map_err(|e| Error::io(&blob_path, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(blob_path)
}

/// Loads a checkpoint from either of its two files. When `expected` is
/// given, the stored config must equal it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let manifest_path = path.with_extension("json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported checkpoint {} v{}", manifest.format, manifest.version),
        ));
    }
    if let Some(cfg) = expected {
        if *cfg != manifest.config {
            return Err(Error::config(format!(
                "checkpoint config does not match: stored {:?}, expected {cfg:?}",
                manifest.config
            )));
        }
    }
    let blob_path = manifest_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if bytes.len() != manifest.total_bytes {
        return Err(Error::format(
            &blob_path,
            format!("expected {} bytes, found {}", manifest.total_bytes, bytes.len()),
        ));
    }
    let mut model = LogloModel::zeroed(manifest.config)?;
    if model.params().len() != manifest.params.len() {
        return Err(Error::format(&manifest_path, "parameter list does not match config"));
    }
    for (p, e) in model.params_mut().iter_mut().zip(&manifest.params) {
        if p.name != e.name || p.tensor.shape != e.shape || e.len != p.tensor.numel() {
            return Err(Error::format(
                &manifest_path,
                format!("parameter {} does not match the model layout", e.name),
            ));
        }
        let end = e.offset + 8 * e.len;
        let raw = bytes
            .get(e.offset..end)
            .ok_or_else(|| Error::format(&blob_path, format!("{} out of range", e.name)))?;
        for (v, chunk) in p.tensor.data.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(Checkpoint {
        model,
        epoch: manifest.epoch,
    })
}
