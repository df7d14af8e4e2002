//! Parameter checkpoints: a JSON shape manifest next to a flat binary of
//! little-endian f64 values, one pair of files per checkpoint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Owner, ParamSet};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct SetEntry {
    owner: String,
    version: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    sets: Vec<SetEntry>,
    total_values: usize,
}

fn manifest_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("manifest.json")
}

fn bin_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("params.bin")
}

pub fn save(base: impl AsRef<Path>, sets: &[&ParamSet]) -> Result<()> {
    let base = base.as_ref();
    if let Some(dir) = base.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut flat: Vec<f64> = Vec::new();
    let mut entries = Vec::new();
    for set in sets {
        let tensors = set
            .names()
            .iter()
            .zip(set.tensors().iter())
            .map(|(name, t)| TensorEntry { name: name.clone(), rows: t.rows(), cols: t.cols() })
            .collect();
        entries.push(SetEntry {
            owner: set.owner().as_str().to_string(),
            version: set.version(),
            tensors,
        });
        flat.extend(set.to_flat());
    }
    let manifest = Manifest { sets: entries, total_values: flat.len() };
    fs::write(manifest_path(base), serde_json::to_string_pretty(&manifest)?)?;
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin_path(base), bytes)?;
    Ok(())
}

/// Load a checkpoint into existing sets; owners, names and shapes must match
/// the manifest exactly.
pub fn load_into(base: impl AsRef<Path>, sets: &mut [&mut ParamSet]) -> Result<()> {
    let base = base.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(base))?)?;
    let bytes = fs::read(bin_path(base))?;
    if bytes.len() != manifest.total_values * 8 {
        return Err(Error::invalid_argument("checkpoint binary length mismatch"));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    if manifest.sets.len() != sets.len() {
        return Err(Error::invalid_argument(format!(
            "checkpoint has {} parameter sets, expected {}",
            manifest.sets.len(),
            sets.len()
        )));
    }
    let mut off = 0;
    for (entry, set) in manifest.sets.iter().zip(sets.iter_mut()) {
        let owner = Owner::parse(&entry.owner)?;
        if owner != set.owner() {
            return Err(Error::invalid_argument(format!(
                "owner mismatch: checkpoint {}, model {}",
                entry.owner,
                set.owner().as_str()
            )));
        }
        let mut set_len = 0;
        for (te, (name, t)) in entry.tensors.iter().zip(set.names().iter().zip(set.tensors())) {
            if te.name != *name || (te.rows, te.cols) != t.shape() {
                return Err(Error::invalid_argument(format!(
                    "tensor mismatch at {name}: checkpoint {}({}x{})",
                    te.name, te.rows, te.cols
                )));
            }
            set_len += te.rows * te.cols;
        }
        set.from_flat(&flat[off..off + set_len]);
        off += set_len;
    }
    Ok(())
}
