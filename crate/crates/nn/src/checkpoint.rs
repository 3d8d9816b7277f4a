//! Single-file checkpoint archive: a JSON manifest (tensor names, shapes,
//! config, provenance hashes) followed by raw little-endian f64 data.
//! Serialization is canonical — tensors sorted by name — so identical
//! contents produce identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::{from_vec, Tensor};

const MAGIC: &[u8; 8] = b"GPSECKP1";

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("corrupt manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("corrupt data section: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: serde_json::Value,
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus a config block and provenance metadata.
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub config: serde_json::Value,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        tensors: BTreeMap<String, Tensor>,
        config: serde_json::Value,
        meta: BTreeMap<String, String>,
    ) -> Self {
        Self { tensors, config, meta }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut data: Vec<u8> = Vec::new();
        for (name, t) in &self.tensors {
            let offset = data.len() / 8;
            for v in t.iter() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                len: t.len(),
            });
        }
        let manifest = Manifest {
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&manifest_bytes)?;
        f.write_all(&data)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut len_bytes = [0u8; 8];
        f.read_exact(&mut len_bytes)?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        f.read_exact(&mut manifest_bytes)?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
        let mut data = Vec::new();
        f.read_to_end(&mut data)?;

        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            let start = e.offset * 8;
            let end = start + e.len * 8;
            if end > data.len() {
                return Err(CheckpointError::Data(format!(
                    "tensor {} extends past end of file",
                    e.name
                )));
            }
            let values: Vec<f64> = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if values.len() != e.shape.iter().product::<usize>() {
                return Err(CheckpointError::Data(format!("tensor {} shape mismatch", e.name)));
            }
            tensors.insert(e.name, from_vec(&e.shape, values));
        }
        Ok(Self { tensors, config: manifest.config, meta: manifest.meta })
    }
}

/// SHA-256 of a file, hex-encoded. Used for the no-joint-fine-tuning and
/// rerun-determinism contracts.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
