//! Self-describing model checkpoints.
//!
//! Layout: the 8-byte magic `SACLCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header (training
//! configuration, encoder configuration and the name and shape of every
//! tensor) and finally the tensor values as little-endian `f64` in header
//! order. The classifier head is stored as the last two tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{CompactConfig, CompactEncoder};
use crate::error::{Error, Result};
use crate::objective::ClassifierHead;
use crate::trainer::{Model, TrainConfig};

const MAGIC: &[u8; 8] = b"SACLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub train: TrainConfig,
    pub encoder: CompactConfig,
    pub tensors: Vec<TensorInfo>,
}

fn tensors(model: &Model<CompactEncoder>) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out = model.encoder.named_tensors();
    out.push(("head.weight".into(), model.head.weight.shape().to_vec(), model.head.weight.as_slice().unwrap()));
    out.push(("head.bias".into(), model.head.bias.shape().to_vec(), model.head.bias.as_slice().unwrap()));
    out
}

pub fn to_bytes(model: &Model<CompactEncoder>, config: &TrainConfig) -> Result<Vec<u8>> {
    let tensors = tensors(model);
    let header = CheckpointHeader {
        train: config.clone(),
        encoder: model.encoder.config().clone(),
        tensors: tensors.iter().map(|(name, shape, _)| TensorInfo { name: name.clone(), shape: shape.clone() }).collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let values: usize = tensors.iter().map(|t| t.2.len()).sum();
    let mut out = Vec::with_capacity(20 + header.len() + 8 * values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, data) in tensors {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model<CompactEncoder>, TrainConfig)> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("checkpoint format version {version}, expected {FORMAT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..).unwrap_or_default();
    if body.len() < header_len {
        return Err(bad("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..header_len])?;
    let mut values = body[header_len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    if (body.len() - header_len) % 8 != 0 {
        return Err(bad("tensor data is not a whole number of f64 values".into()));
    }

    let mut encoder = CompactEncoder::new(header.encoder.clone())?;
    let mut head = ClassifierHead::zeros(header.encoder.hidden_size);
    let expected: Vec<TensorInfo> = {
        let model = Model { encoder: encoder.clone(), head: head.clone() };
        tensors(&model).into_iter().map(|(name, shape, _)| TensorInfo { name, shape }).collect()
    };
    if expected != header.tensors {
        return Err(bad("tensor layout does not match the encoder configuration".into()));
    }
    let mut slots = encoder.tensors_mut();
    slots.push(head.weight.as_slice_mut().unwrap());
    slots.push(head.bias.as_slice_mut().unwrap());
    for slot in slots {
        for v in slot.iter_mut() {
            *v = values.next().ok_or_else(|| bad("truncated tensor data".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(bad("trailing data after the last tensor".into()));
    }
    Ok((Model { encoder, head }, header.train))
}

pub fn save_checkpoint(path: &Path, model: &Model<CompactEncoder>, config: &TrainConfig) -> Result<()> {
    fs::write(path, to_bytes(model, config)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<CompactEncoder>, TrainConfig)> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
