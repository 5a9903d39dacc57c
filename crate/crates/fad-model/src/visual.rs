//! Visual encoder: a small strided conv trunk ending in a spatial softmax.
//!
//! The spatial softmax turns each head channel's activation map into expected
//! (x, y) coordinates in [-1, 1], so the per-frame feature is a set of 2-D
//! keypoints. That keeps the feature dimension tiny while staying sensitive to
//! where facial structure sits in the frame, which is the property the motion
//! model conditions on.

use fad_core::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::bind::Bound;
use crate::error::{ModelError, Result};
use crate::init::{Init, ParamSpec};

/// Architecture of the visual encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualEncoderConfig {
    /// Image channels per frame (grayscale input by default).
    pub in_channels: usize,
    /// Square input resolution in pixels.
    pub resolution: usize,
    /// Output width of each stride-2 conv stage.
    pub widths: Vec<usize>,
    /// Channels of the 1x1 head; each contributes an (x, y) pair.
    pub head_channels: usize,
    /// Spatial softmax temperature.
    pub temperature: f64,
}

impl Default for VisualEncoderConfig {
    fn default() -> Self {
        VisualEncoderConfig {
            in_channels: 1,
            resolution: 96,
            widths: vec![16, 32, 64, 96],
            head_channels: 96,
            temperature: 1.0,
        }
    }
}

impl VisualEncoderConfig {
    /// Per-frame feature dimension: an (x, y) pair per head channel.
    pub fn output_dim(&self) -> usize {
        2 * self.head_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.head_channels == 0 {
            return Err(ModelError::config("channel counts must be positive"));
        }
        if self.widths.is_empty() {
            return Err(ModelError::config("widths must list at least one stage"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(ModelError::config("stage widths must be positive"));
        }
        if self.resolution >> self.widths.len() == 0 {
            return Err(ModelError::config(
                "resolution too small for the number of stride-2 stages",
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ModelError::config("temperature must be positive"));
        }
        Ok(())
    }

    /// Parameter manifest in canonical order.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let mut c_in = self.in_channels;
        for (i, &c_out) in self.widths.iter().enumerate() {
            specs.push(ParamSpec::new(
                format!("visual.stage{i}.w"),
                vec![c_out, c_in, 3, 3],
                Init::KaimingNormal { fan_in: c_in * 9 },
            ));
            specs.push(ParamSpec::new(
                format!("visual.stage{i}.b"),
                vec![c_out],
                Init::Zeros,
            ));
            c_in = c_out;
        }
        specs.push(ParamSpec::new(
            "visual.head.w",
            vec![self.head_channels, c_in, 1, 1],
            Init::KaimingNormal { fan_in: c_in },
        ));
        specs.push(ParamSpec::new(
            "visual.head.b",
            vec![self.head_channels],
            Init::Zeros,
        ));
        specs
    }
}

/// Encodes one frame `[C, H, W]` to a keypoint vector `[2 * head_channels]`.
pub fn encode_frame<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &VisualEncoderConfig,
    frame: Var,
) -> Result<Var> {
    let mut h = frame;
    for i in 0..cfg.widths.len() {
        let w = p.var(&format!("visual.stage{i}.w"))?;
        let b = p.var(&format!("visual.stage{i}.b"))?;
        h = g.conv2d(h, w, b, 2, 1)?;
        h = g.relu(h);
    }
    let w = p.var("visual.head.w")?;
    let b = p.var("visual.head.b")?;
    h = g.conv2d(h, w, b, 1, 0)?;
    Ok(g.spatial_softmax(h, T::of(cfg.temperature))?)
}

/// Encodes a clip of frames `[l, C, H, W]` to features `[l, 2 * head_channels]`.
///
/// The frames are data, not parameters: they enter the graph as leaves.
pub fn encode_visual<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &VisualEncoderConfig,
    frames: &Tensor<T>,
) -> Result<Var> {
    cfg.validate()?;
    let shape = frames.shape();
    if shape.len() != 4 {
        return Err(ModelError::invalid(format!(
            "expected frames of rank 4 [l, C, H, W], got shape {shape:?}"
        )));
    }
    let (l, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if c != cfg.in_channels {
        return Err(ModelError::invalid(format!(
            "expected {} image channels, got {c}",
            cfg.in_channels
        )));
    }
    if h != cfg.resolution || w != cfg.resolution {
        return Err(ModelError::invalid(format!(
            "wrong input resolution: expected {0}x{0}, got {h}x{w}",
            cfg.resolution
        )));
    }
    if l == 0 {
        return Err(ModelError::invalid("clip has no frames"));
    }
    let mut rows = Vec::with_capacity(l);
    for i in 0..l {
        let frame = frames
            .slice_rows(i, i + 1)
            .and_then(|t| t.reshape(vec![c, h, w]))
            .map_err(ModelError::from)?;
        let leaf = g.leaf(frame);
        rows.push(encode_frame(g, p, cfg, leaf)?);
    }
    Ok(g.stack_rows(&rows)?)
}

/// Analytic FLOPs for encoding a clip of `l` frames: 2 FLOPs per conv
/// multiply-add (activations and the softmax pooling are excluded).
pub fn visual_flops(cfg: &VisualEncoderConfig, l: usize) -> u64 {
    let mut per_frame = 0u64;
    let mut res = cfg.resolution as u64;
    let mut c_in = cfg.in_channels as u64;
    for &w in &cfg.widths {
        res /= 2;
        per_frame += 2 * w as u64 * c_in * 9 * res * res;
        c_in = w as u64;
    }
    per_frame += 2 * cfg.head_channels as u64 * c_in * res * res;
    per_frame * l as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::materialize;
    use fad_core::{derive_rng, ParamSet};

    fn test_cfg() -> VisualEncoderConfig {
        VisualEncoderConfig {
            widths: vec![8, 16],
            resolution: 32,
            head_channels: 6,
            ..VisualEncoderConfig::default()
        }
    }

    fn test_params(cfg: &VisualEncoderConfig) -> ParamSet<f32> {
        materialize(&cfg.manifest(), &mut derive_rng(11, "init", 0)).unwrap()
    }

    #[test]
    fn produces_one_keypoint_row_per_frame_inside_the_unit_box() {
        let cfg = test_cfg();
        let params = test_params(&cfg);
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &params, false);
        let frames = Tensor::<f32>::randn(vec![3, 1, 32, 32], &mut derive_rng(1, "frames", 0));
        let feats = encode_visual(&mut g, &bound, &cfg, &frames).unwrap();
        assert_eq!(g.value(feats).shape(), &[3, cfg.output_dim()]);
        assert!(g.value(feats).data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn rejects_wrong_resolution_and_wrong_channel_count() {
        let cfg = test_cfg();
        let params = test_params(&cfg);
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &params, false);
        let bad_res = Tensor::<f32>::zeros(vec![2, 1, 48, 48]);
        let err = encode_visual(&mut g, &bound, &cfg, &bad_res).unwrap_err();
        assert!(err.to_string().contains("wrong input resolution"));
        let bad_chan = Tensor::<f32>::zeros(vec![2, 3, 32, 32]);
        assert!(encode_visual(&mut g, &bound, &cfg, &bad_chan).is_err());
    }

    #[test]
    fn translating_the_input_moves_the_features() {
        // A bright patch at two locations must produce different keypoints:
        // the spatial softmax keeps positional information that global pooling
        // would destroy.
        let cfg = test_cfg();
        let params = test_params(&cfg);
        let place = |y0: usize, x0: usize| {
            let mut img = Tensor::<f32>::zeros(vec![1, 1, 32, 32]);
            for dy in 0..5 {
                for dx in 0..5 {
                    img.set(&[0, 0, y0 + dy, x0 + dx], 1.0);
                }
            }
            let mut g = Graph::new();
            let bound = Bound::bind(&mut g, &params, false);
            let feats = encode_visual(&mut g, &bound, &cfg, &img).unwrap();
            g.value(feats).clone()
        };
        let a = place(4, 4);
        let b = place(22, 14);
        assert!(a.max_abs_diff(&b) > 1e-3, "diff {}", a.max_abs_diff(&b));
    }
}
