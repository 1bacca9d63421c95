//! On-disk model format: a TOML document holding the [`EncoderConfig`] and a
//! tensor manifest, next to a flat little-endian blob.
//!
//! ```toml
//! blob = "model.bin"
//!
//! [config]
//! layers = 2
//! # ...
//!
//! [[tensors]]
//! name = "token_embedding"
//! shape = [40, 16]
//! offset = 0
//! dtype = "f32"
//! byte_order = "little"
//! ```
//!
//! `offset` is in bytes from the start of the blob; tensors are row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::memtrack::MemCategory;
use crate::scalar::Scalar;

use super::config::EncoderConfig;
use super::model::Encoder;
use super::weights::EncoderWeights;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
    pub dtype: String,
    pub byte_order: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub blob: String,
    pub config: EncoderConfig,
    pub tensors: Vec<TensorEntry>,
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path.parent().map_or_else(|| PathBuf::from(blob), |dir| dir.join(blob))
}

/// Writes `path` (manifest) and `path` with extension `bin` (tensors).
pub fn save_model<T: Scalar>(model: &Encoder<T>, path: &Path) -> Result<()> {
    let bin = path.with_extension("bin");
    let blob_name = bin
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("bad model path {}", path.display())))?
        .to_string();
    let mut bytes = Vec::with_capacity(model.weights.bytes());
    let mut tensors = Vec::new();
    for (name, t) in model.weights.named() {
        tensors.push(TensorEntry {
            name,
            shape: [t.rows(), t.cols()],
            offset: bytes.len(),
            dtype: T::NAME.to_string(),
            byte_order: "little".to_string(),
        });
        for &x in t.as_slice() {
            match T::BYTES {
                4 => bytes.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes()),
                _ => bytes.extend_from_slice(&x.to_f64_lossy().to_le_bytes()),
            }
        }
    }
    let manifest = ModelManifest { blob: blob_name, config: model.config.clone(), tensors };
    let text = toml::to_string(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, text)?;
    fs::write(bin, bytes)?;
    Ok(())
}

fn read_tensor<T: Scalar>(blob: &[u8], e: &TensorEntry) -> Result<DenseMatrix<T>> {
    if e.byte_order != "little" {
        return Err(Error::Serde(format!("{}: unsupported byte order {}", e.name, e.byte_order)));
    }
    let width = match e.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Serde(format!("{}: unsupported dtype {other}", e.name))),
    };
    let len = e.shape[0] * e.shape[1];
    let end = e.offset + len * width;
    let raw = blob.get(e.offset..end).ok_or_else(|| {
        Error::Serde(format!("{}: bytes {}..{end} outside a blob of {}", e.name, e.offset, blob.len()))
    })?;
    let data = raw
        .chunks_exact(width)
        .map(|c| {
            let x = if width == 4 {
                f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64
            } else {
                f64::from_le_bytes(c.try_into().expect("8 bytes"))
            };
            T::from_f64_lossy(x)
        })
        .collect();
    DenseMatrix::from_vec_in(e.shape[0], e.shape[1], data, MemCategory::Weights)
}

/// Reads a model written by [`save_model`], converting to `T` if needed.
pub fn load_model<T: Scalar>(path: &Path) -> Result<Encoder<T>> {
    let text = fs::read_to_string(path)?;
    let manifest: ModelManifest = toml::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
    manifest.config.validate()?;
    let blob = fs::read(blob_path(path, &manifest.blob))?;
    let mut weights = EncoderWeights::<T>::zeros(&manifest.config);
    let names: Vec<String> = weights.named().into_iter().map(|(n, _)| n).collect();
    if names.len() != manifest.tensors.len() {
        return Err(Error::Serde(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            names.len()
        )));
    }
    for ((slot, name), entry) in weights.tensors_mut().into_iter().zip(&names).zip(&manifest.tensors) {
        if &entry.name != name {
            return Err(Error::Serde(format!("expected tensor {name}, found {}", entry.name)));
        }
        *slot = read_tensor(&blob, entry)?;
    }
    Encoder::from_parts(manifest.config, weights)
}
