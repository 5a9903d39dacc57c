//! Facial-motion coefficient types: 50 expression + 3 jaw + 3 head values per
//! frame, with a fixed flattening order and the expression/rotation views the
//! evaluation metrics are computed on.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

pub const EXPRESSION_DIM: usize = 50;
pub const JAW_DIM: usize = 3;
pub const HEAD_DIM: usize = 3;
/// Width of a flattened frame: expression, then jaw, then head.
pub const MOTION_DIM: usize = EXPRESSION_DIM + JAW_DIM + HEAD_DIM;
/// Width of the rotation view (jaw + head).
pub const ROTATION_DIM: usize = JAW_DIM + HEAD_DIM;

/// One frame of listener (or speaker) facial motion. Immutable and always
/// finite after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionFrame {
    coeffs: [f32; MOTION_DIM],
}

impl MotionFrame {
    /// Builds a frame from the three coefficient groups.
    pub fn new(expression: &[f32], jaw: &[f32], head: &[f32]) -> Result<Self> {
        if expression.len() != EXPRESSION_DIM || jaw.len() != JAW_DIM || head.len() != HEAD_DIM {
            return Err(CoreError::shape(format!(
                "expected {EXPRESSION_DIM}+{JAW_DIM}+{HEAD_DIM} coefficients, got {}+{}+{}",
                expression.len(),
                jaw.len(),
                head.len()
            )));
        }
        let mut coeffs = [0.0f32; MOTION_DIM];
        coeffs[..EXPRESSION_DIM].copy_from_slice(expression);
        coeffs[EXPRESSION_DIM..EXPRESSION_DIM + JAW_DIM].copy_from_slice(jaw);
        coeffs[EXPRESSION_DIM + JAW_DIM..].copy_from_slice(head);
        Self::from_flat(&coeffs)
    }

    /// Builds a frame from an already-flattened 56-value row.
    pub fn from_flat(row: &[f32]) -> Result<Self> {
        if row.len() != MOTION_DIM {
            return Err(CoreError::shape(format!(
                "flattened frame must have {MOTION_DIM} values, got {}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::non_finite("motion frame coefficient"));
        }
        let mut coeffs = [0.0f32; MOTION_DIM];
        coeffs.copy_from_slice(row);
        Ok(MotionFrame { coeffs })
    }

    pub fn zeros() -> Self {
        MotionFrame {
            coeffs: [0.0; MOTION_DIM],
        }
    }

    pub fn expression(&self) -> &[f32] {
        &self.coeffs[..EXPRESSION_DIM]
    }

    pub fn jaw(&self) -> &[f32] {
        &self.coeffs[EXPRESSION_DIM..EXPRESSION_DIM + JAW_DIM]
    }

    pub fn head(&self) -> &[f32] {
        &self.coeffs[EXPRESSION_DIM + JAW_DIM..]
    }

    /// The fixed flattening: expression[0..50], jaw[50..53], head[53..56].
    pub fn flat(&self) -> &[f32; MOTION_DIM] {
        &self.coeffs
    }
}

/// A temporal sequence of motion frames at 30 FPS; never empty.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    frames: Vec<MotionFrame>,
}

impl MotionSequence {
    pub fn new(frames: Vec<MotionFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(CoreError::arg("motion sequence must have T > 0 frames"));
        }
        Ok(MotionSequence { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> &[MotionFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &MotionFrame {
        &self.frames[t]
    }
}

/// Row-per-frame matrix `[T, 56]` of a sequence.
pub fn flatten_motion(seq: &MotionSequence) -> Result<Tensor<f32>> {
    let t = seq.len();
    let mut data = Vec::with_capacity(t * MOTION_DIM);
    for frame in seq.frames() {
        data.extend_from_slice(frame.flat());
    }
    let m = Tensor::new(vec![t, MOTION_DIM], data)?;
    m.ensure_finite("motion matrix")?;
    Ok(m)
}

/// Inverse of [`flatten_motion`]; validates width and finiteness.
pub fn unflatten_motion(m: &Tensor<f32>) -> Result<MotionSequence> {
    if m.rank() != 2 || m.shape()[1] != MOTION_DIM {
        return Err(CoreError::shape(format!(
            "motion matrix must be [T, {MOTION_DIM}], got {:?}",
            m.shape()
        )));
    }
    let t = m.shape()[0];
    let mut frames = Vec::with_capacity(t);
    for row in 0..t {
        frames.push(MotionFrame::from_flat(
            &m.data()[row * MOTION_DIM..(row + 1) * MOTION_DIM],
        )?);
    }
    MotionSequence::new(frames)
}

/// Splits `[T, 56]` into the expression view `[T, 50]` and rotation view
/// `[T, 6]` the metrics are reported on.
pub fn split_metric_views(m: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if m.rank() != 2 || m.shape()[1] != MOTION_DIM {
        return Err(CoreError::shape(format!(
            "expected [T, {MOTION_DIM}], got {:?}",
            m.shape()
        )));
    }
    let t = m.shape()[0];
    let mut expr = Vec::with_capacity(t * EXPRESSION_DIM);
    let mut rot = Vec::with_capacity(t * ROTATION_DIM);
    for row in 0..t {
        let r = &m.data()[row * MOTION_DIM..(row + 1) * MOTION_DIM];
        expr.extend_from_slice(&r[..EXPRESSION_DIM]);
        rot.extend_from_slice(&r[EXPRESSION_DIM..]);
    }
    Ok((
        Tensor::new(vec![t, EXPRESSION_DIM], expr)?,
        Tensor::new(vec![t, ROTATION_DIM], rot)?,
    ))
}
