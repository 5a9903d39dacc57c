//! Facial-motion diffusion model: encoders, denoiser, schedules, training.
//!
//! The crate assembles the pieces that turn speaker video and audio into
//! listener motion coefficients. A mel front end and a convolutional visual
//! encoder produce per-frame features, `fuse` joins them into a condition
//! stream, and a 1-D U-Net denoiser drives the diffusion chain defined in
//! `diffusion`. `train` provides the AdamW loop, `checkpoint` the on-disk
//! format, and `model` the high-level handle tying configs to parameters.

pub mod bind;
pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod fuse;
pub mod init;
pub mod mel;
pub mod model;
pub mod train;

pub mod elnet;
pub mod visual;

pub use bind::Bound;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use diffusion::{
    make_schedule, q_sample, respaced_steps, reverse_step, sample, training_loss, Denoiser,
    Schedule, ScheduleKind,
};
pub use elnet::{denoise, denoise_with_options, DenoiseOptions, ELNetConfig};
pub use error::{ModelError, Result};
pub use fuse::{fuse, Modality};
pub use init::{materialize, Init, ParamSpec};
pub use mel::{mel_spectrogram, MelConfig, MelExtractor};
pub use model::{count_flops, encode_condition, FadModel, FlopsReport, ModelConfig, NetDenoiser};
pub use train::{
    adamw_step, train, AdamWConfig, AdamWState, TraceRow, TrainConfig, TrainProgress,
    TrainSequence,
};
pub use visual::{encode_visual, VisualEncoderConfig};
