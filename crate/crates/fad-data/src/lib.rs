//! Deterministic synthetic dyadic-conversation datasets.
//!
//! A smooth latent trajectory drives the speaker's video, audio, and motion;
//! the listener's motion is a known linear coupling of the latent delayed by
//! `d` frames plus seeded noise. The known structure gives evaluation and
//! learning checks exact targets. Datasets persist as a JSON manifest plus
//! raw little-endian f32 blobs, with per-sequence WAV exports.

pub mod dataset;
pub mod dyad;
pub mod error;
pub mod split;
pub mod wav;

pub use dataset::{
    read_dataset, write_dataset, BlobSpec, DatasetManifest, DATASET_VERSION, MANIFEST_NAME,
};
pub use dyad::{
    generate_corpus, generate_dyad, latent_trajectory, DyadCorpus, DyadParams, DyadSequence,
    DEFAULT_DELAY, DEFAULT_LATENT_DIM, DEFAULT_NOISE_SIGMA, DEFAULT_SMOOTHING, RESOLUTION,
};
pub use error::{DataError, Result};
pub use split::{split_corpus, SplitIndices};
pub use wav::{quantize, write_wav};
