//! Single-file parameter container.
//!
//! Layout: the 8 magic bytes `KGRRCKPT`, a little-endian u64 manifest
//! length, the JSON manifest, then every tensor as raw little-endian values
//! at the byte offset the manifest gives (relative to the end of the
//! manifest).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DType, Real, Tensor};
use crate::reader::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"KGRRCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    /// Free-form run information (epoch, step, run id).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn encode_checkpoint<F: Real>(params: &ModelParams<F>, meta: serde_json::Value) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(params.num_scalars() * F::DTYPE.size());
    let mut tensors = Vec::new();
    for (name, t) in params.names().iter().zip(params.tensors()) {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: F::DTYPE,
            offset: data.len() as u64,
        });
        for &x in t.data() {
            x.write_le(&mut data);
        }
    }
    let manifest = Manifest {
        version: VERSION,
        config: params.config().clone(),
        tensors,
        meta,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

fn read_values<G: Real, F: Real>(bytes: &[u8]) -> Vec<F> {
    bytes
        .chunks_exact(G::DTYPE.size())
        .map(|c| F::of(G::read_le(c).to_f64().unwrap_or(f64::NAN)))
        .collect()
}

/// Parses a checkpoint, converting stored values to `F`.
pub fn decode_checkpoint<F: Real>(bytes: &[u8]) -> Result<(ModelParams<F>, Manifest)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if manifest.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", manifest.version)));
    }
    let data = &bytes[16 + len..];
    let mut named = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + count * e.dtype.size();
        let raw = data
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past the end of the file", e.name)))?;
        let values = match e.dtype {
            DType::F32 => read_values::<f32, F>(raw),
            DType::F64 => read_values::<f64, F>(raw),
        };
        named.push((e.name.clone(), Tensor::new(e.shape.clone(), values)?));
    }
    let params = ModelParams::from_named(&manifest.config, named)?;
    if !params.is_finite() {
        return Err(bad("checkpoint holds non-finite values"));
    }
    Ok((params, manifest))
}

pub fn save_checkpoint<F: Real>(path: &Path, params: &ModelParams<F>, meta: serde_json::Value) -> Result<()> {
    let bytes = encode_checkpoint(params, meta)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<(ModelParams<F>, Manifest)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
