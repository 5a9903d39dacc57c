//! Clip segmentation: slicing frame-aligned video and 16 kHz audio into the
//! minimum processing units the pipeline streams.

use std::ops::Range;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Video frame rate the whole pipeline assumes.
pub const FPS: u32 = 30;
/// Audio sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// Audio sample index of a frame boundary. Boundaries are rounded from the
/// exact real position so windows never drift, at the price of a ±1-sample
/// wobble in window length (16000/30 is not an integer).
pub fn frame_to_sample(frame: usize) -> usize {
    (frame as f64 * SAMPLE_RATE as f64 / FPS as f64).round() as usize
}

/// `l` video frames plus the audio window covering the same time span.
#[derive(Clone, Debug)]
pub struct Clip {
    index: usize,
    video: Tensor<f32>,
    audio: Vec<f32>,
}

impl Clip {
    pub fn index(&self) -> usize {
        self.index
    }

    /// Frames `[l, C_img, H, W]`, values in [0, 1].
    pub fn video(&self) -> &Tensor<f32> {
        &self.video
    }

    pub fn audio(&self) -> &[f32] {
        &self.audio
    }

    /// Number of video frames in the clip.
    pub fn len(&self) -> usize {
        self.video.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Source frames this clip covers: `[i*l, (i+1)*l)`.
    pub fn source_frames(&self) -> Range<usize> {
        let l = self.len();
        self.index * l..(self.index + 1) * l
    }

    /// Listener frames this clip's generation targets: the next clip-length
    /// window `[(i+1)*l, (i+2)*l)`. The model predicts the listener's future
    /// reaction, so the last input clip of a sequence has no target.
    pub fn target_frames(&self) -> Range<usize> {
        let l = self.len();
        (self.index + 1) * l..(self.index + 2) * l
    }
}

/// An ordered run of clips cut from one sequence.
#[derive(Clone, Debug)]
pub struct ClipStream {
    clips: Vec<Clip>,
    l: usize,
}

impl ClipStream {
    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    /// Clip length in frames.
    pub fn clip_len(&self) -> usize {
        self.l
    }

    /// Clip count `n = floor(T / l)`.
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Cuts `video [T, C_img, H, W]` and its aligned audio into
/// `n = floor(T / l)` clips, dropping trailing frames beyond `n*l`. Clip `i`
/// gets frames `[i*l, (i+1)*l)` and samples
/// `[frame_to_sample(i*l), frame_to_sample((i+1)*l))`.
pub fn segment_clips(video: &Tensor<f32>, audio: &[f32], l: usize) -> Result<ClipStream> {
    if video.rank() != 4 {
        return Err(CoreError::shape(format!(
            "video must be [T, C_img, H, W], got {:?}",
            video.shape()
        )));
    }
    if l == 0 {
        return Err(CoreError::arg("clip length l must be >= 1"));
    }
    let t = video.shape()[0];
    if t < l {
        return Err(CoreError::arg("input shorter than one clip"));
    }
    if audio.len() < frame_to_sample(t) {
        return Err(CoreError::arg("audio/video misaligned"));
    }

    let n = t / l;
    let frame_len: usize = video.shape()[1..].iter().product();
    let clip_shape: Vec<usize> = std::iter::once(l)
        .chain(video.shape()[1..].iter().copied())
        .collect();

    let mut clips = Vec::with_capacity(n);
    for i in 0..n {
        let vdata = video.data()[i * l * frame_len..(i + 1) * l * frame_len].to_vec();
        let a_lo = frame_to_sample(i * l);
        let a_hi = frame_to_sample((i + 1) * l);
        clips.push(Clip {
            index: i,
            video: Tensor::new(clip_shape.clone(), vdata)?,
            audio: audio[a_lo..a_hi].to_vec(),
        });
    }
    Ok(ClipStream { clips, l })
}
