//! Checkpoint serialization: a JSON header followed by raw float blobs.
//!
//! Layout: `[u32 LE header length][header JSON][parameter blob][moment blobs]`.
//! The header carries the format version, the full model config, the ordered
//! parameter manifest (names, shapes, element offsets), optimizer presence,
//! and training progress. All floats are little-endian f32, so a round trip
//! is byte-exact and two identically-seeded runs write identical files.

use fad_core::{CoreError, ParamSet, Tensor32};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{ModelError, Result};
use crate::model::{FadModel, ModelConfig};
use crate::train::{AdamWState, TrainProgress};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Element (not byte) offset into the parameter blob.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerHeader {
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    params: Vec<ParamEntry>,
    optimizer: Option<OptimizerHeader>,
    progress: TrainProgress,
}

/// Everything a checkpoint restores.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: FadModel,
    pub optimizer: Option<AdamWState<f32>>,
    pub progress: TrainProgress,
}

fn append_blob(bytes: &mut Vec<u8>, t: &Tensor32) {
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes the model (and optionally optimizer state) to `path`.
pub fn save_checkpoint(
    path: &Path,
    model: &FadModel,
    optimizer: Option<&AdamWState<f32>>,
    progress: TrainProgress,
) -> Result<()> {
    let mut entries = Vec::with_capacity(model.params.len());
    let mut offset = 0u64;
    for (name, p) in model.params.iter() {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += p.value.len() as u64;
    }
    if let Some(state) = optimizer {
        if state.m.len() != model.params.len() {
            return Err(ModelError::invalid(
                "optimizer state does not match the parameter set",
            ));
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        params: entries,
        optimizer: optimizer.map(|s| OptimizerHeader { step: s.step }),
        progress,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(4 + header_json.len() + offset as usize * 4);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for (_, p) in model.params.iter() {
        append_blob(&mut bytes, &p.value);
    }
    if let Some(state) = optimizer {
        for t in state.m.iter().chain(state.v.iter()) {
            append_blob(&mut bytes, t);
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_tensor(blob: &[u8], offset_elems: usize, shape: Vec<usize>) -> Result<Tensor32> {
    let len: usize = shape.iter().product();
    let start = offset_elems * 4;
    let end = start + len * 4;
    if end > blob.len() {
        return Err(ModelError::invalid(
            "checkpoint blob size mismatch: blob shorter than its manifest",
        ));
    }
    let data: Vec<f32> = blob[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor32::new(shape, data).map_err(ModelError::from)
}

/// Reads a checkpoint back, validating version, manifest/config agreement,
/// and blob sizes before reconstructing the model.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 {
        return Err(ModelError::invalid("checkpoint too short for its header"));
    }
    let header_len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if 4 + header_len > bytes.len() {
        return Err(ModelError::invalid("checkpoint too short for its header"));
    }
    let header: Header = serde_json::from_slice(&bytes[4..4 + header_len])?;
    if header.version != CHECKPOINT_VERSION {
        return Err(ModelError::Version {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    header.config.validate()?;

    // The stored manifest must be exactly what the stored config derives;
    // anything else means the file was produced for a different architecture.
    let expected = header.config.manifest();
    if expected.len() != header.params.len() {
        return Err(ModelError::from(CoreError::shape(format!(
            "checkpoint manifest has {} parameters, config expects {}",
            header.params.len(),
            expected.len()
        ))));
    }
    let mut offset = 0u64;
    for (spec, entry) in expected.iter().zip(&header.params) {
        if spec.name != entry.name || spec.shape != entry.shape || entry.offset != offset {
            return Err(ModelError::from(CoreError::shape(format!(
                "checkpoint parameter '{}' (shape {:?}) does not match config's '{}' (shape {:?})",
                entry.name, entry.shape, spec.name, spec.shape
            ))));
        }
        offset += entry.shape.iter().product::<usize>() as u64;
    }

    let n_elems = offset as usize;
    let blob_count = if header.optimizer.is_some() { 3 } else { 1 };
    let expected_len = 4 + header_len + blob_count * n_elems * 4;
    if bytes.len() != expected_len {
        return Err(ModelError::invalid(format!(
            "checkpoint blob size mismatch: expected {expected_len} bytes, found {}",
            bytes.len()
        )));
    }
    let blob = &bytes[4 + header_len..];

    let mut params = ParamSet::new();
    for entry in &header.params {
        let value = read_tensor(blob, entry.offset as usize, entry.shape.clone())?;
        params.insert(&entry.name, value)?;
    }
    let model = FadModel::from_parts(header.config, params)?;

    let optimizer = match header.optimizer {
        None => None,
        Some(opt) => {
            let mut m = Vec::with_capacity(header.params.len());
            let mut v = Vec::with_capacity(header.params.len());
            for entry in &header.params {
                m.push(read_tensor(
                    blob,
                    n_elems + entry.offset as usize,
                    entry.shape.clone(),
                )?);
            }
            for entry in &header.params {
                v.push(read_tensor(
                    blob,
                    2 * n_elems + entry.offset as usize,
                    entry.shape.clone(),
                )?);
            }
            Some(AdamWState {
                step: opt.step,
                m,
                v,
            })
        }
    };
    Ok(Checkpoint {
        model,
        optimizer,
        progress: header.progress,
    })
}
