//! Binary checkpoints: magic, format version, a JSON manifest, then raw
//! little-endian `f64` parameter payloads in manifest order.
//!
//! ```text
//! b"HAFUCKPT" | u32 version | u64 manifest_len | manifest JSON | payload
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{ModelConfig, SegModel};
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"HAFUCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub model_name: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

/// A model plus the name it is reported under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_name: String,
    pub model: SegModel,
}

impl Checkpoint {
    pub fn new(model_name: impl Into<String>, model: SegModel) -> Self {
        Self { model_name: model_name.into(), model }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            dtype: DTYPE.into(),
            model_name: self.model_name.clone(),
            config: self.model.cfg.clone(),
            tensors: self.model.params.iter().map(|p| TensorEntry { name: p.name.clone(), shape: p.shape.clone() }).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        let payload: usize = self.model.params.num_scalars() * 8;
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + manifest.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for p in self.model.params.iter() {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let header = MAGIC.len() + 12;
        if bytes.len() < header || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[header..];
        if body.len() < mlen {
            return Err(bad("truncated manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..mlen]).map_err(|e| bad(format!("manifest: {e}")))?;
        if manifest.dtype != DTYPE {
            return Err(bad(format!("unsupported dtype {}", manifest.dtype)));
        }
        let payload = &body[mlen..];
        let expected: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>() * 8).sum();
        if payload.len() != expected {
            return Err(bad(format!("payload has {} bytes, manifest shapes need {expected}", payload.len())));
        }
        let mut store = ParamStore::new();
        let mut at = 0;
        for t in &manifest.tensors {
            let n: usize = t.shape.iter().product();
            let data = payload[at..at + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            at += 8 * n;
            store.push(t.name.clone(), t.shape.clone(), data);
        }
        let model = SegModel::with_params(manifest.config, store)?;
        Ok(Self { model_name: manifest.model_name, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
