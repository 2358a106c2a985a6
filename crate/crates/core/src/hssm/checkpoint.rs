//! Parameter checkpoints: a flat little-endian f64 file plus a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Hssm, HssmConfig, InitOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the binary file, in f64 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub dtype: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: HssmConfig,
    pub tensors: Vec<ManifestEntry>,
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

/// Tensors sorted for storage: encoder, then blocks by index and tensor name,
/// then decoder.
fn storage_order(model: &Hssm) -> Vec<super::TensorSpec> {
    let mut t = model.layout();
    t.sort_by_key(|s| {
        let group = match s.block {
            None if s.name.starts_with("encoder") => 0,
            Some(l) => 1 + l,
            None => usize::MAX,
        };
        (group, s.name.clone())
    });
    t
}

/// Writes `path` (binary) and its `.json` sidecar.
pub fn save_checkpoint(model: &Hssm, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
    let flat = model.flat_params();
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    let mut tensors = Vec::new();
    let mut offset = 0;
    for spec in storage_order(model) {
        for x in &flat[spec.range()] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        tensors.push(ManifestEntry {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            offset,
        });
        offset += spec.len();
    }
    let manifest = Manifest {
        schema: 1,
        dtype: "f64-le".into(),
        seed,
        config_hash: config_hash.to_string(),
        config: model.config.clone(),
        tensors,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    fs::write(path, bytes).map_err(io)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(io)?;
    fs::write(sidecar(path), json).map_err(io)
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(Hssm, Manifest)> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(sidecar(path)).map_err(io)?).map_err(io)?;
    if manifest.schema != 1 || manifest.dtype != "f64-le" {
        return Err(Error::Checkpoint("unsupported manifest schema".into()));
    }
    let bytes = fs::read(path).map_err(io)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint("binary length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut model = Hssm::init(&manifest.config, &mut rng, InitOptions::default())?;
    let mut flat = vec![0.0; model.num_params()];
    let layout = model.layout();
    if layout.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint("tensor count mismatch".into()));
    }
    for entry in &manifest.tensors {
        let spec = layout
            .iter()
            .find(|s| s.name == entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {}", entry.name)))?;
        if spec.shape != entry.shape {
            return Err(Error::Checkpoint(format!("shape mismatch for {}", entry.name)));
        }
        let src = values
            .get(entry.offset..entry.offset + spec.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated data for {}", entry.name)))?;
        flat[spec.range()].copy_from_slice(src);
    }
    model.set_flat_params(&flat)?;
    Ok((model, manifest))
}
