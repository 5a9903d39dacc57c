//! On-disk dataset format: one JSON manifest plus raw little-endian f32
//! blobs (row-major, shapes declared in the manifest), with a WAV export of
//! each speaker's audio track.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fad_core::{frame_to_sample, Tensor32, MOTION_DIM};
use serde::{Deserialize, Serialize};

use crate::dyad::{DyadCorpus, DyadSequence, RESOLUTION};
use crate::error::{DataError, Result};
use crate::wav::write_wav;

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// One raw float blob: path relative to the manifest, plus its shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobSpec {
    pub path: String,
    pub shape: Vec<usize>,
}

impl BlobSpec {
    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }

    /// f32 little-endian payload size.
    pub fn byte_len(&self) -> usize {
        self.num_elements() * 4
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub sequences: usize,
    pub frames: usize,
    pub delay: usize,
    pub noise_sigma: f32,
    pub resolution: usize,
    /// Audio samples per sequence.
    pub audio_samples: usize,
    pub sequence_seeds: Vec<u64>,
    pub speaker_frames: BlobSpec,
    pub speaker_audio: BlobSpec,
    pub speaker_motion: BlobSpec,
    pub listener_motion: BlobSpec,
}

impl DatasetManifest {
    pub fn blobs(&self) -> [&BlobSpec; 4] {
        [
            &self.speaker_frames,
            &self.speaker_audio,
            &self.speaker_motion,
            &self.listener_motion,
        ]
    }
}

fn write_blob<'a>(path: &Path, chunks: impl Iterator<Item = &'a [f32]>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for chunk in chunks {
        let mut bytes = Vec::with_capacity(chunk.len() * 4);
        for v in chunk {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the corpus into `dir` (created if missing) and returns the manifest
/// path. Speaker audio is additionally exported as one WAV per sequence under
/// `dir/audio/`.
pub fn write_dataset(dir: &Path, corpus: &DyadCorpus) -> Result<PathBuf> {
    if corpus.sequences.is_empty() {
        return Err(DataError::invalid("cannot write an empty corpus"));
    }
    let n = corpus.sequences.len();
    let t = corpus.frames;
    let samples = frame_to_sample(t);
    for (i, seq) in corpus.sequences.iter().enumerate() {
        if seq.speaker_frames.shape() != [t, 1, RESOLUTION, RESOLUTION]
            || seq.speaker_motion.shape() != [t, MOTION_DIM]
            || seq.listener_motion.shape() != [t, MOTION_DIM]
            || seq.speaker_audio.len() != samples
        {
            return Err(DataError::invalid(format!(
                "sequence {i} does not match the corpus frame count {t}"
            )));
        }
    }
    fs::create_dir_all(dir)?;

    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        seed: corpus.seed,
        sequences: n,
        frames: t,
        delay: corpus.delay,
        noise_sigma: corpus.noise_sigma,
        resolution: RESOLUTION,
        audio_samples: samples,
        sequence_seeds: corpus.sequences.iter().map(|s| s.seed).collect(),
        speaker_frames: BlobSpec {
            path: "speaker_frames.f32".into(),
            shape: vec![n, t, 1, RESOLUTION, RESOLUTION],
        },
        speaker_audio: BlobSpec {
            path: "speaker_audio.f32".into(),
            shape: vec![n, samples],
        },
        speaker_motion: BlobSpec {
            path: "speaker_motion.f32".into(),
            shape: vec![n, t, MOTION_DIM],
        },
        listener_motion: BlobSpec {
            path: "listener_motion.f32".into(),
            shape: vec![n, t, MOTION_DIM],
        },
    };

    write_blob(
        &dir.join(&manifest.speaker_frames.path),
        corpus.sequences.iter().map(|s| s.speaker_frames.data()),
    )?;
    write_blob(
        &dir.join(&manifest.speaker_audio.path),
        corpus.sequences.iter().map(|s| s.speaker_audio.as_slice()),
    )?;
    write_blob(
        &dir.join(&manifest.speaker_motion.path),
        corpus.sequences.iter().map(|s| s.speaker_motion.data()),
    )?;
    write_blob(
        &dir.join(&manifest.listener_motion.path),
        corpus.sequences.iter().map(|s| s.listener_motion.data()),
    )?;

    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir)?;
    for (i, seq) in corpus.sequences.iter().enumerate() {
        write_wav(&audio_dir.join(format!("seq_{i:04}.wav")), &seq.speaker_audio)?;
    }

    let manifest_path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text)?;
    Ok(manifest_path)
}

fn read_blob(base: &Path, spec: &BlobSpec) -> Result<Vec<f32>> {
    let path = base.join(&spec.path);
    let bytes = fs::read(&path)
        .map_err(|e| DataError::dataset(format!("blob '{}' unreadable: {e}", spec.path)))?;
    if bytes.len() != spec.byte_len() {
        return Err(DataError::dataset(format!(
            "blob '{}' size mismatch: expected {} bytes, found {}",
            spec.path,
            spec.byte_len(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Loads a dataset back into memory, validating the manifest version and
/// every blob's byte length against its declared shape first.
pub fn read_dataset(path: &Path) -> Result<DyadCorpus> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != DATASET_VERSION {
        return Err(DataError::dataset(format!(
            "unsupported dataset version {} (expected {DATASET_VERSION})",
            manifest.version
        )));
    }
    let n = manifest.sequences;
    let t = manifest.frames;
    let res = manifest.resolution;
    let samples = manifest.audio_samples;
    if manifest.sequence_seeds.len() != n {
        return Err(DataError::dataset(format!(
            "manifest lists {} sequence seeds for {} sequences",
            manifest.sequence_seeds.len(),
            n
        )));
    }
    let expect_shape = |spec: &BlobSpec, want: &[usize]| -> Result<()> {
        if spec.shape != want {
            return Err(DataError::dataset(format!(
                "blob '{}' shape {:?} does not match the manifest header (expected {want:?})",
                spec.path, spec.shape
            )));
        }
        Ok(())
    };
    expect_shape(&manifest.speaker_frames, &[n, t, 1, res, res])?;
    expect_shape(&manifest.speaker_audio, &[n, samples])?;
    expect_shape(&manifest.speaker_motion, &[n, t, MOTION_DIM])?;
    expect_shape(&manifest.listener_motion, &[n, t, MOTION_DIM])?;

    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let frames = read_blob(&base, &manifest.speaker_frames)?;
    let audio = read_blob(&base, &manifest.speaker_audio)?;
    let smotion = read_blob(&base, &manifest.speaker_motion)?;
    let lmotion = read_blob(&base, &manifest.listener_motion)?;

    let frame_len = t * res * res;
    let motion_len = t * MOTION_DIM;
    let mut sequences = Vec::with_capacity(n);
    for i in 0..n {
        sequences.push(DyadSequence {
            seed: manifest.sequence_seeds[i],
            speaker_frames: Tensor32::new(
                vec![t, 1, res, res],
                frames[i * frame_len..(i + 1) * frame_len].to_vec(),
            )?,
            speaker_audio: audio[i * samples..(i + 1) * samples].to_vec(),
            speaker_motion: Tensor32::new(
                vec![t, MOTION_DIM],
                smotion[i * motion_len..(i + 1) * motion_len].to_vec(),
            )?,
            listener_motion: Tensor32::new(
                vec![t, MOTION_DIM],
                lmotion[i * motion_len..(i + 1) * motion_len].to_vec(),
            )?,
        });
    }
    Ok(DyadCorpus {
        seed: manifest.seed,
        frames: t,
        delay: manifest.delay,
        noise_sigma: manifest.noise_sigma,
        sequences,
    })
}
