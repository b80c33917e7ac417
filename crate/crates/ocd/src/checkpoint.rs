//! Model checkpoints: versioned JSON with base64-packed tensor data.
//!
//! Tensor payloads are little-endian `f32`, so checkpoints are compact and
//! portable at the cost of rounding the in-memory `f64` parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, ModelParams, Tensor, ToyModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?}: shape {shape:?} does not match {len} values")]
    ShapeMismatch {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("tensor {name:?}: payload of {bytes} bytes is not a whole number of f32s")]
    BadPayload { name: String, bytes: usize },
    #[error("tensor {name:?}: invalid base64: {source}")]
    Base64 {
        name: String,
        source: base64::DecodeError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    /// base64 of little-endian f32 values, row-major.
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    /// Step counter carried for bookkeeping (e.g. resuming metric logs).
    #[serde(default)]
    step: u64,
    /// Effective run configuration, embedded verbatim for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
    tensors: BTreeMap<String, TensorRecord>,
}

fn encode_tensor(t: &Tensor) -> TensorRecord {
    let mut bytes = Vec::with_capacity(t.data.len() * 4);
    for &v in &t.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    TensorRecord {
        shape: t.shape.clone(),
        data: B64.encode(bytes),
    }
}

fn decode_tensor(name: &str, rec: &TensorRecord) -> Result<Tensor, CheckpointError> {
    let bytes = B64
        .decode(&rec.data)
        .map_err(|source| CheckpointError::Base64 {
            name: name.to_string(),
            source,
        })?;
    if bytes.len() % 4 != 0 {
        return Err(CheckpointError::BadPayload {
            name: name.to_string(),
            bytes: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let expected: usize = rec.shape.iter().product();
    if expected != data.len() {
        return Err(CheckpointError::ShapeMismatch {
            name: name.to_string(),
            shape: rec.shape.clone(),
            len: data.len(),
        });
    }
    Ok(Tensor {
        shape: rec.shape.clone(),
        data,
    })
}

/// Write `model` to `path`, recording `step` and an optional run-config blob
/// alongside the weights.
pub fn save_checkpoint(
    model: &ToyModel,
    step: u64,
    meta: Option<serde_json::Value>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let tensors: BTreeMap<String, TensorRecord> = model
        .params
        .tensors()
        .into_iter()
        .map(|(name, t)| (name.to_string(), encode_tensor(t)))
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        step,
        meta,
        tensors,
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Read a checkpoint back; returns the model and the recorded step.
pub fn load_checkpoint(path: &Path) -> Result<(ToyModel, u64), CheckpointError> {
    let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    file.config.validate()?;
    let mut params = ModelParams::zeros(&file.config);
    for (name, slot) in params.tensors_mut() {
        let rec = file
            .tensors
            .get(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        let tensor = decode_tensor(name, rec)?;
        if tensor.shape != slot.shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                shape: tensor.shape,
                len: slot.data.len(),
            });
        }
        *slot = tensor;
    }
    Ok((
        ToyModel {
            config: file.config,
            params,
        },
        file.step,
    ))
}
