//! Numerical and domain foundation for the facial-action diffusion pipeline:
//! dense tensors generic over the scalar type, a small reverse-mode autodiff
//! graph covering the ops the encoders and denoiser need, named parameter
//! sets, and the motion/clip domain types.
//!
//! Training and inference run in `f32` ([`Tensor32`]); verification (gradient
//! checks, oracle chains) runs the same code in `f64` ([`Tensor64`]).

pub mod clip;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod motion;
pub mod ops;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use clip::{frame_to_sample, segment_clips, Clip, ClipStream, FPS, SAMPLE_RATE};
pub use error::{CoreError, Result};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use motion::{
    flatten_motion, split_metric_views, unflatten_motion, MotionFrame, MotionSequence,
    EXPRESSION_DIM, HEAD_DIM, JAW_DIM, MOTION_DIM, ROTATION_DIM,
};
pub use param::{ParamSet, Parameter};
pub use rng::{derive_rng, derive_seed};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Training/inference precision.
pub type Tensor32 = Tensor<f32>;
/// Verification precision.
pub type Tensor64 = Tensor<f64>;
