//! Full model assembly: encoders + denoiser behind one config and parameter
//! set, with the conditioning pipeline and FLOP accounting.

use fad_core::{Graph, ParamSet, Scalar, Tensor, Tensor32, Var, MOTION_DIM};
use serde::{Deserialize, Serialize};

use crate::bind::Bound;
use crate::diffusion::{self, Denoiser, Schedule, ScheduleKind};
use crate::elnet::{denoise, denoiser_flops, ELNetConfig};
use crate::error::{ModelError, Result};
use crate::fuse::{fuse, Modality};
use crate::init::{materialize, ParamSpec};
use crate::mel::{MelConfig, MelExtractor};
use crate::visual::{encode_visual, VisualEncoderConfig};

/// Everything needed to rebuild the network and its data interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Frames per clip; the model generates this many frames at a time.
    pub clip_len: usize,
    /// Diffusion steps the schedule is built for.
    pub k_steps: usize,
    pub schedule: ScheduleKind,
    pub elnet: ELNetConfig,
    pub visual: VisualEncoderConfig,
    pub mel: MelConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            clip_len: 8,
            k_steps: 100,
            schedule: ScheduleKind::SquaredCosine,
            elnet: ELNetConfig::default(),
            visual: VisualEncoderConfig::default(),
            mel: MelConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.elnet.validate()?;
        self.visual.validate()?;
        self.mel.validate()?;
        if self.elnet.motion_channels != MOTION_DIM {
            return Err(ModelError::config(format!(
                "denoiser motion channels must be {MOTION_DIM}, got {}",
                self.elnet.motion_channels
            )));
        }
        let d_m = self.visual.output_dim() + self.mel.n_mels;
        if self.elnet.cond_channels != d_m {
            return Err(ModelError::config(format!(
                "condition width mismatch: encoders produce {d_m}, denoiser expects {}",
                self.elnet.cond_channels
            )));
        }
        if self.clip_len == 0 || self.clip_len % (1 << self.elnet.depth) != 0 {
            return Err(ModelError::config(format!(
                "clip_len {} must be a positive multiple of {}",
                self.clip_len,
                1 << self.elnet.depth
            )));
        }
        if self.k_steps == 0 {
            return Err(ModelError::config("k_steps must be positive"));
        }
        Ok(())
    }

    /// Canonical parameter order: visual encoder first, then the denoiser.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let mut specs = self.visual.manifest();
        specs.extend(self.elnet.manifest());
        specs
    }
}

/// Trained (or trainable) model: configuration plus named parameters.
#[derive(Debug, Clone)]
pub struct FadModel {
    config: ModelConfig,
    pub params: ParamSet<f32>,
}

impl FadModel {
    /// Fresh model with seed-derived initialization.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = materialize(&config.manifest(), &mut fad_core::derive_rng(seed, "init", 0))?;
        Ok(FadModel { config, params })
    }

    /// Rebuilds a model from existing parameter values (checkpoint load).
    pub fn from_parts(config: ModelConfig, params: ParamSet<f32>) -> Result<Self> {
        config.validate()?;
        for spec in config.manifest() {
            let p = params.get(&spec.name)?;
            if p.value.shape() != spec.shape.as_slice() {
                return Err(ModelError::from(fad_core::CoreError::shape(format!(
                    "parameter '{}' has shape {:?}, config expects {:?}",
                    spec.name,
                    p.value.shape(),
                    spec.shape
                ))));
            }
        }
        Ok(FadModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params.num_elements()
    }

    pub fn schedule(&self) -> Result<Schedule<f32>> {
        diffusion::make_schedule(self.config.k_steps, self.config.schedule)
    }

    /// Tensor-level denoiser view for the sampler (weights read-only).
    pub fn denoiser(&self) -> NetDenoiser<'_, f32> {
        NetDenoiser {
            params: &self.params,
            cfg: &self.config.elnet,
        }
    }

    /// Runs the encoders on one clip's raw inputs and returns the condition
    /// matrix `[l, d_m]` as a plain tensor.
    pub fn condition_for_clip(
        &self,
        mel: &MelExtractor,
        video: &Tensor32,
        audio: &[f32],
        modality: Modality,
    ) -> Result<Tensor32> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params, false);
        let m = encode_condition(
            &mut g,
            &bound,
            &self.config,
            mel,
            video,
            audio,
            modality,
        )?;
        Ok(g.value(m).clone())
    }

    /// Generates one clip of motion from a precomputed condition matrix.
    pub fn generate_clip(
        &self,
        m: &Tensor32,
        steps: usize,
        sched: &Schedule<f32>,
        seed: u64,
    ) -> Result<Tensor32> {
        diffusion::sample(&self.denoiser(), m, steps, sched, seed)
    }
}

/// Builds the condition matrix `[l, d_m]` inside a graph: visual keypoints
/// and log-mel features, fused with modality masking. A masked encoder is
/// never run; its zero block enters directly.
pub fn encode_condition<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    mel: &MelExtractor,
    video: &Tensor<T>,
    audio: &[f32],
    modality: Modality,
) -> Result<Var> {
    let l = cfg.clip_len;
    if video.rank() != 4 || video.shape()[0] != l {
        return Err(ModelError::invalid(format!(
            "expected a clip of {l} frames, got video shape {:?}",
            video.shape()
        )));
    }
    let v = if modality.uses_video() {
        encode_visual(g, p, &cfg.visual, video)?
    } else {
        g.leaf(Tensor::zeros(vec![l, cfg.visual.output_dim()]))
    };
    let a = if modality.uses_audio() {
        let feats = mel.extract(audio, l)?;
        g.leaf(feats.cast::<T>())
    } else {
        g.leaf(Tensor::zeros(vec![l, cfg.mel.n_mels]))
    };
    fuse(g, v, a, modality)
}

/// Read-only tensor-level view of the network as a [`Denoiser`].
///
/// Each call builds a fresh inference graph; weights are shared immutably, so
/// concurrent sampling from multiple threads is safe.
pub struct NetDenoiser<'a, T: Scalar> {
    params: &'a ParamSet<T>,
    cfg: &'a ELNetConfig,
}

impl<'a, T: Scalar> NetDenoiser<'a, T> {
    pub fn new(params: &'a ParamSet<T>, cfg: &'a ELNetConfig) -> Self {
        NetDenoiser { params, cfg }
    }
}

impl<T: Scalar> Denoiser<T> for NetDenoiser<'_, T> {
    fn denoise(&self, xk: &Tensor<T>, k: usize, m: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, self.params, false);
        let xv = g.leaf(xk.clone());
        let mv = g.leaf(m.clone());
        let out = denoise(&mut g, &bound, self.cfg, xv, k, mv)?;
        Ok(g.value(out).clone())
    }

    fn motion_dim(&self) -> usize {
        self.cfg.motion_channels
    }
}

/// Analytic FLOP breakdown for generating one clip, counting a multiply-add
/// as two FLOPs (see the per-module counters for the exact conventions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlopsReport {
    pub visual_encoder: u64,
    pub audio_features: u64,
    pub denoiser_per_step: u64,
    pub steps: u64,
    pub total: u64,
}

/// FLOPs for one clip at `steps` denoiser invocations. Masked encoders cost
/// nothing, mirroring what the engine actually computes. The total is exactly
/// linear in `steps` with slope `denoiser_per_step`.
pub fn count_flops(cfg: &ModelConfig, modality: Modality, steps: usize) -> FlopsReport {
    let l = cfg.clip_len;
    let visual = if modality.uses_video() {
        crate::visual::visual_flops(&cfg.visual, l)
    } else {
        0
    };
    let audio = if modality.uses_audio() {
        crate::mel::mel_flops(&cfg.mel, l)
    } else {
        0
    };
    let per_step = denoiser_flops(&cfg.elnet, l);
    FlopsReport {
        visual_encoder: visual,
        audio_features: audio,
        denoiser_per_step: per_step,
        steps: steps as u64,
        total: visual + audio + per_step * steps as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small but fully wired configuration used across the test suite.
    pub fn tiny_config() -> ModelConfig {
        let visual = VisualEncoderConfig {
            in_channels: 1,
            resolution: 32,
            widths: vec![4, 8],
            head_channels: 4,
            temperature: 1.0,
        };
        let mel = MelConfig {
            n_mels: 16,
            ..MelConfig::default()
        };
        let elnet = ELNetConfig {
            motion_channels: MOTION_DIM,
            cond_channels: visual.output_dim() + mel.n_mels,
            base_width: 8,
            depth: 1,
            res_blocks: 1,
            groups: 2,
            time_embed_dim: 16,
        };
        ModelConfig {
            clip_len: 8,
            k_steps: 20,
            schedule: ScheduleKind::SquaredCosine,
            elnet,
            visual,
            mel,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = FadModel::init(tiny_config(), 4).unwrap();
        let b = FadModel::init(tiny_config(), 4).unwrap();
        let c = FadModel::init(tiny_config(), 5).unwrap();
        for ((_, pa), (_, pb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(pa.value.data(), pb.value.data());
        }
        let diff = a
            .params
            .iter()
            .zip(c.params.iter())
            .any(|((_, pa), (_, pc))| pa.value.data() != pc.value.data());
        assert!(diff);
    }

    #[test]
    fn config_cross_checks_reject_inconsistent_widths() {
        let mut cfg = tiny_config();
        cfg.elnet.cond_channels += 1;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.clip_len = 9;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.elnet.motion_channels = 8;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn condition_pipeline_masks_modalities_blockwise() {
        let cfg = tiny_config();
        let model = FadModel::init(cfg.clone(), 7).unwrap();
        let mel = MelExtractor::new(&cfg.mel).unwrap();
        let mut rng = fad_core::derive_rng(7, "cond", 0);
        let video = Tensor32::randn(vec![8, 1, 32, 32], &mut rng);
        let audio: Vec<f32> = (0..4300).map(|i| (i as f32 * 0.01).sin() * 0.2).collect();

        let both = model
            .condition_for_clip(&mel, &video, &audio, Modality::Both)
            .unwrap();
        let audio_only = model
            .condition_for_clip(&mel, &video, &audio, Modality::Audio)
            .unwrap();
        let video_only = model
            .condition_for_clip(&mel, &video, &audio, Modality::Video)
            .unwrap();
        let d_v = cfg.visual.output_dim();
        let d_m = d_v + cfg.mel.n_mels;
        assert_eq!(both.shape(), &[8, d_m]);
        for r in 0..8 {
            for c in 0..d_m {
                let b = both.at(&[r, c]);
                let ao = audio_only.at(&[r, c]);
                let vo = video_only.at(&[r, c]);
                if c < d_v {
                    assert_eq!(ao, 0.0);
                    assert_eq!(vo, b);
                } else {
                    assert_eq!(ao, b);
                    assert_eq!(vo, 0.0);
                }
            }
        }
    }

    #[test]
    fn flops_are_exactly_linear_in_steps() {
        let cfg = ModelConfig::default();
        let r1 = count_flops(&cfg, Modality::Both, 1);
        let r10 = count_flops(&cfg, Modality::Both, 10);
        assert_eq!(r10.total - r1.total, 9 * r1.denoiser_per_step);
        let audio_only = count_flops(&cfg, Modality::Audio, 1);
        assert_eq!(audio_only.visual_encoder, 0);
        assert!(audio_only.total < r1.total);
    }

    #[test]
    fn default_flops_match_an_independent_recount() {
        // Hand recount, layer by layer, of the default configuration
        // (resolution 96, widths [16, 32, 64, 96], head 96; l = 8;
        // base 64, depth 2, two residual blocks per stage, time dim 128).
        let visual_per_frame: u64 = 2 * 16 * 1 * 9 * 48 * 48
            + 2 * 32 * 16 * 9 * 24 * 24
            + 2 * 64 * 32 * 9 * 12 * 12
            + 2 * 96 * 64 * 9 * 6 * 6
            + 2 * 96 * 96 * 6 * 6;
        let rb = |c_in: u64, c_out: u64, len: u64| {
            2 * c_out * c_in * 3 * len
                + 2 * c_out * c_out * 3 * len
                + 2 * c_out * 128
                + if c_in != c_out { 2 * c_out * c_in * len } else { 0 }
        };
        let denoiser: u64 = 2 * (2 * 128 * 128)
            + 2 * 64 * 376 * 3 * 8
            + 2 * rb(64, 64, 8)
            + 2 * 128 * 64 * 3 * 4
            + 2 * rb(128, 128, 4)
            + 2 * 256 * 128 * 3 * 2
            + 2 * rb(256, 256, 2)
            + 2 * 128 * 256 * 3 * 4
            + rb(256, 128, 4)
            + rb(128, 128, 4)
            + 2 * 64 * 128 * 3 * 8
            + rb(128, 64, 8)
            + rb(64, 64, 8)
            + 2 * 56 * 64 * 8;
        let cfg = ModelConfig::default();
        let report = count_flops(&cfg, Modality::Video, 1);
        assert_eq!(report.visual_encoder, 8 * visual_per_frame);
        assert_eq!(report.denoiser_per_step, denoiser);
    }

    #[test]
    fn net_denoiser_matches_a_direct_graph_evaluation() {
        let cfg = tiny_config();
        let mut model = FadModel::init(cfg.clone(), 9).unwrap();
        // Random head so outputs are nonzero.
        let head = model.params.get_mut("elnet.final.w").unwrap();
        head.value = Tensor32::randn(
            head.value.shape().to_vec(),
            &mut fad_core::derive_rng(9, "head", 0),
        );
        let mut rng = fad_core::derive_rng(9, "io", 0);
        let xk = Tensor32::randn(vec![8, MOTION_DIM], &mut rng);
        let m = Tensor32::randn(vec![8, cfg.elnet.cond_channels], &mut rng);
        let via_trait = model.denoiser().denoise(&xk, 3, &m).unwrap();

        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &model.params, false);
        let xv = g.leaf(xk);
        let mv = g.leaf(m);
        let direct = denoise(&mut g, &bound, &cfg.elnet, xv, 3, mv).unwrap();
        assert_eq!(via_trait.data(), g.value(direct).data());
    }
}
