//! On-disk format for generated listener motion: a JSON manifest plus one
//! little-endian f32 blob holding `[sequences, frames, 56]` predictions that
//! start at frame `offset` of each source sequence.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fad_core::{Tensor32, MOTION_DIM};
use fad_data::BlobSpec;
use serde::{Deserialize, Serialize};

pub const PREDICTIONS_VERSION: u32 = 1;
pub const PREDICTIONS_MANIFEST: &str = "predictions.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub version: u32,
    pub sequences: usize,
    /// Predicted frames per sequence.
    pub frames: usize,
    /// Index of the first predicted frame within the source sequence.
    pub offset: usize,
    pub clip_len: usize,
    /// Sampler steps used at generation time.
    pub steps: usize,
    pub seed: u64,
    pub motion: BlobSpec,
}

#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub manifest: PredictionManifest,
    /// Per-sequence `[frames, 56]` listener motion.
    pub motion: Vec<Tensor32>,
}

/// Writes the prediction set into `dir` and returns the manifest path.
pub fn write_predictions(
    dir: &Path,
    mut manifest: PredictionManifest,
    motion: &[Tensor32],
) -> Result<PathBuf> {
    if motion.len() != manifest.sequences {
        bail!(
            "prediction manifest lists {} sequences, got {}",
            manifest.sequences,
            motion.len()
        );
    }
    fs::create_dir_all(dir)?;
    manifest.motion = BlobSpec {
        path: "pred_motion.f32".into(),
        shape: vec![manifest.sequences, manifest.frames, MOTION_DIM],
    };
    let mut bytes = Vec::new();
    for (i, m) in motion.iter().enumerate() {
        if m.shape() != [manifest.frames, MOTION_DIM] {
            bail!(
                "prediction {} has shape {:?}, expected [{}, {MOTION_DIM}]",
                i,
                m.shape(),
                manifest.frames
            );
        }
        for v in m.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join(&manifest.motion.path), bytes)?;
    let manifest_path = dir.join(PREDICTIONS_MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text)?;
    Ok(manifest_path)
}

/// Reads predictions back; `path` may be the manifest file or its directory.
pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let manifest_path = if path.is_dir() {
        path.join(PREDICTIONS_MANIFEST)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("cannot read predictions '{}'", manifest_path.display()))?;
    let manifest: PredictionManifest = serde_json::from_str(&text)?;
    if manifest.version != PREDICTIONS_VERSION {
        bail!(
            "unsupported predictions version {} (expected {PREDICTIONS_VERSION})",
            manifest.version
        );
    }
    let want = [manifest.sequences, manifest.frames, MOTION_DIM];
    if manifest.motion.shape != want {
        bail!(
            "blob '{}' shape {:?} does not match the manifest header (expected {want:?})",
            manifest.motion.path,
            manifest.motion.shape
        );
    }
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let bytes = fs::read(base.join(&manifest.motion.path))
        .with_context(|| format!("blob '{}' unreadable", manifest.motion.path))?;
    if bytes.len() != manifest.motion.byte_len() {
        bail!(
            "blob '{}' size mismatch: expected {} bytes, found {}",
            manifest.motion.path,
            manifest.motion.byte_len(),
            bytes.len()
        );
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let per_seq = manifest.frames * MOTION_DIM;
    let motion = (0..manifest.sequences)
        .map(|i| {
            Tensor32::new(
                vec![manifest.frames, MOTION_DIM],
                values[i * per_seq..(i + 1) * per_seq].to_vec(),
            )
            .map_err(anyhow::Error::from)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet { manifest, motion })
}
