//! AdamW optimization and the end-to-end training loop.
//!
//! Determinism contract: every random draw comes from a stream derived from
//! `(seed, domain, index)` where the index encodes epoch and item position.
//! Batch boundaries only group gradient sums; they never shift RNG state, so
//! training is bitwise reproducible and a run resumed from an epoch-boundary
//! checkpoint continues exactly as the unbroken run would have.

use fad_core::{
    derive_rng, frame_to_sample, segment_clips, CoreError, ParamSet, Scalar, Tensor, Tensor32,
    MOTION_DIM,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::bind::Bound;
use crate::diffusion::{make_schedule, q_sample};
use crate::elnet::denoise;
use crate::error::{ModelError, Result};
use crate::fuse::Modality;
use crate::mel::MelExtractor;
use crate::model::{encode_condition, FadModel};

/// AdamW hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            beta1: 0.95,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moment estimates, parallel to the parameter set's
/// insertion order, plus the bias-correction step counter.
#[derive(Debug, Clone)]
pub struct AdamWState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let m = params
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
            .collect::<Vec<_>>();
        AdamWState {
            step: 0,
            m: m.clone(),
            v: m,
        }
    }
}

/// One decoupled-weight-decay Adam update from the gradients stored in
/// `params`. Moments use bias correction; the decay multiplies the parameter
/// directly and never touches the gradient path.
pub fn adamw_step<T: Scalar>(
    params: &mut ParamSet<T>,
    state: &mut AdamWState<T>,
    cfg: &AdamWConfig,
) -> Result<()> {
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(ModelError::invalid(
            "optimizer state does not match the parameter set",
        ));
    }
    state.step += 1;
    let lr = T::of(cfg.learning_rate);
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let eps = T::of(cfg.eps);
    let one = T::one();
    let decay = one - lr * T::of(cfg.weight_decay);
    let bc1 = one - T::of(cfg.beta1.powi(state.step as i32));
    let bc2 = one - T::of(cfg.beta2.powi(state.step as i32));
    for (i, (name, p)) in params.iter_mut().enumerate() {
        if !p.grad.all_finite() {
            return Err(ModelError::from(CoreError::non_finite(format!(
                "gradient for parameter '{name}'"
            ))));
        }
        if state.m[i].len() != p.value.len() {
            return Err(ModelError::invalid(
                "optimizer state does not match the parameter set",
            ));
        }
        let md = state.m[i].data_mut();
        let vd = state.v[i].data_mut();
        let gd = p.grad.data();
        let pd = p.value.data_mut();
        for j in 0..gd.len() {
            md[j] = b1 * md[j] + (one - b1) * gd[j];
            vd[j] = b2 * vd[j] + (one - b2) * gd[j] * gd[j];
            let m_hat = md[j] / bc1;
            let v_hat = vd[j] / bc2;
            pd[j] = pd[j] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Training hyperparameters. The diffusion step count and schedule live on
/// the model config so inference always matches training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub modality: Modality,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamWConfig::default(),
            epochs: 20,
            batch_size: 32,
            seed: 0,
            modality: Modality::Both,
        }
    }
}

/// One dyadic sequence prepared for training: the speaker's raw streams and
/// the listener's motion coefficients, frame-aligned.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    /// `[T, C, H, W]` speaker video frames.
    pub speaker_video: Tensor32,
    /// 16 kHz speaker audio covering all `T` frames.
    pub speaker_audio: Vec<f32>,
    /// `[T, 56]` listener motion coefficients.
    pub listener_motion: Tensor32,
}

/// How far a (possibly resumed) run has progressed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epochs_done: usize,
    pub steps_done: u64,
}

/// One optimizer step in the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f32,
    pub wall_ms: f64,
}

/// Uniform diffusion-step draw for one training item.
pub fn draw_timestep(rng: &mut impl Rng, k_steps: usize) -> usize {
    rng.random_range(1..=k_steps)
}

struct TrainItem {
    seq: usize,
    clip: usize,
}

/// Validates the corpus against the model's clip geometry and lists every
/// (sequence, clip) pair that has a future target window.
fn build_items(dataset: &[TrainSequence], l: usize) -> Result<Vec<TrainItem>> {
    if dataset.is_empty() {
        return Err(ModelError::invalid("empty dataset"));
    }
    let mut items = Vec::new();
    for (s, seq) in dataset.iter().enumerate() {
        let stream = segment_clips(&seq.speaker_video, &seq.speaker_audio, l)?;
        let frames = seq.listener_motion.shape().to_vec();
        if frames.len() != 2 || frames[1] != MOTION_DIM {
            return Err(ModelError::invalid(format!(
                "sequence {s}: listener motion must be [T, {MOTION_DIM}], got {frames:?}"
            )));
        }
        if frames[0] != seq.speaker_video.shape()[0] {
            return Err(ModelError::invalid(format!(
                "sequence {s}: listener motion has {} frames, video has {}",
                frames[0],
                seq.speaker_video.shape()[0]
            )));
        }
        // The last clip has no future window to predict.
        for clip in 0..stream.len().saturating_sub(1) {
            items.push(TrainItem { seq: s, clip });
        }
    }
    if items.is_empty() {
        return Err(ModelError::invalid(
            "dataset has no clip with a future target window",
        ));
    }
    Ok(items)
}

/// In-place Fisher-Yates shuffle; hand-rolled so the permutation depends only
/// on our own RNG stream, not on a library's shuffle implementation.
fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Trains `model` in place from `progress.epochs_done` up to `cfg.epochs`.
///
/// Per item: `k ~ Uniform{1..K}` and `eps ~ N(0, I)` from the item's own
/// derived stream, forward through encoders + denoiser, backprop, and one
/// AdamW step per batch on the mean item gradient. Returns the loss trace
/// (one row per optimizer step); `on_epoch_end` fires after each completed
/// epoch so callers can write periodic checkpoints.
pub fn train(
    model: &mut FadModel,
    dataset: &[TrainSequence],
    cfg: &TrainConfig,
    state: &mut AdamWState<f32>,
    progress: &mut TrainProgress,
    mut on_epoch_end: impl FnMut(&FadModel, &AdamWState<f32>, &TrainProgress) -> Result<()>,
) -> Result<Vec<TraceRow>> {
    if cfg.batch_size == 0 {
        return Err(ModelError::invalid("batch_size must be positive"));
    }
    let model_cfg = model.config().clone();
    let l = model_cfg.clip_len;
    let k_steps = model_cfg.k_steps;
    let sched = make_schedule::<f32>(k_steps, model_cfg.schedule)?;
    let mel = MelExtractor::new(&model_cfg.mel)?;
    let items = build_items(dataset, l)?;
    let n_items = items.len();

    let mut trace = Vec::new();
    for epoch in progress.epochs_done..cfg.epochs {
        let mut order: Vec<usize> = (0..n_items).collect();
        shuffle(&mut order, &mut derive_rng(cfg.seed, "shuffle", epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let started = Instant::now();
            model.params.zero_grads();
            let mut batch_loss = 0.0f64;
            for &pos in batch {
                let item = &items[pos];
                let seq = &dataset[item.seq];
                let lo = item.clip * l;
                let video = seq
                    .speaker_video
                    .slice_rows(lo, lo + l)
                    .map_err(ModelError::from)?;
                let audio = &seq.speaker_audio[frame_to_sample(lo)..frame_to_sample(lo + l)];
                let x0 = seq
                    .listener_motion
                    .slice_rows(lo + l, lo + 2 * l)
                    .map_err(ModelError::from)?;

                let mut item_rng =
                    derive_rng(cfg.seed, "noise", epoch as u64 * n_items as u64 + pos as u64);
                let k = draw_timestep(&mut item_rng, k_steps);
                let eps = Tensor32::randn(vec![l, MOTION_DIM], &mut item_rng);
                let xk = q_sample(&x0, k, &eps, &sched)?;

                let mut g = fad_core::Graph::new();
                let bound = Bound::bind(&mut g, &model.params, true);
                let m = encode_condition(
                    &mut g,
                    &bound,
                    &model_cfg,
                    &mel,
                    &video,
                    audio,
                    cfg.modality,
                )?;
                let xk_var = g.leaf(xk);
                let eps_hat = denoise(&mut g, &bound, &model_cfg.elnet, xk_var, k, m)?;
                let eps_var = g.leaf(eps);
                let loss = g.mse(eps_hat, eps_var)?;
                g.backward(loss)?;
                bound.collect_grads(&g, &mut model.params)?;
                batch_loss += f64::from(g.value(loss).item());
            }
            // Mean gradient over the batch.
            let inv = 1.0 / batch.len() as f32;
            for (_, p) in model.params.iter_mut() {
                for v in p.grad.data_mut() {
                    *v *= inv;
                }
            }
            adamw_step(&mut model.params, state, &cfg.optimizer)?;
            progress.steps_done += 1;
            let loss = (batch_loss / batch.len() as f64) as f32;
            if !loss.is_finite() {
                return Err(ModelError::invalid(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {}",
                    progress.steps_done
                )));
            }
            trace.push(TraceRow {
                step: progress.steps_done,
                loss,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        progress.epochs_done = epoch + 1;
        on_epoch_end(model, state, progress)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fad_core::Tensor64;

    fn scalar_param(v: f64, g: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("p", Tensor64::scalar(v)).unwrap();
        p.get_mut("p").unwrap().grad = Tensor64::scalar(g);
        p
    }

    #[test]
    fn hand_computed_single_step_matches_to_1e12() {
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            beta1: 0.95,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        };
        let mut params = scalar_param(0.5, 0.2);
        let mut state = AdamWState::new(&params);
        adamw_step(&mut params, &mut state, &cfg).unwrap();

        // Independent scalar arithmetic.
        let m = 0.05f64 * 0.2;
        let v = 0.001f64 * 0.2 * 0.2;
        let m_hat = m / (1.0 - 0.95f64);
        let v_hat = v / (1.0 - 0.999f64);
        let expected = 0.5 * (1.0 - 0.1 * 0.01) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        let got = params.get("p").unwrap().value.item();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn two_steps_follow_the_moment_recurrences() {
        let cfg = AdamWConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut params = scalar_param(1.0, 0.3);
        let mut state = AdamWState::new(&params);
        adamw_step(&mut params, &mut state, &cfg).unwrap();
        params.get_mut("p").unwrap().grad = Tensor64::scalar(-0.1);
        adamw_step(&mut params, &mut state, &cfg).unwrap();

        let mut p = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 0.3f64), (2, -0.1f64)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.99 * v + 0.01 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.99f64.powi(t));
            p -= 0.05 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        let got = params.get("p").unwrap().value.item();
        assert!((got - p).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters_untouched_without_decay() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut params = scalar_param(0.7, 0.0);
        let mut state = AdamWState::new(&params);
        adamw_step(&mut params, &mut state, &cfg).unwrap();
        assert_eq!(params.get("p").unwrap().value.item(), 0.7);
    }

    #[test]
    fn weight_decay_alone_shrinks_parameters_multiplicatively() {
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut params = scalar_param(0.8, 0.0);
        let mut state = AdamWState::new(&params);
        adamw_step(&mut params, &mut state, &cfg).unwrap();
        let got = params.get("p").unwrap().value.item();
        assert_eq!(got, 0.8 * (1.0 - 0.1 * 0.5));
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = scalar_param(0.5, f64::NAN);
        let mut state = AdamWState::new(&params);
        let err = adamw_step(&mut params, &mut state, &AdamWConfig::default()).unwrap_err();
        assert!(err.to_string().contains("'p'"), "message: {err}");
    }

    #[test]
    fn descent_probe_reduces_a_quadratic_loss() {
        // Gradient of 0.5 * ||p - t||^2 is (p - t); one small AdamW step must
        // reduce the loss.
        let target = 3.0f64;
        let mut params = scalar_param(1.0, 1.0 - target);
        let mut state = AdamWState::new(&params);
        let cfg = AdamWConfig {
            learning_rate: 1e-6,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let before = (1.0f64 - target).powi(2) * 0.5;
        adamw_step(&mut params, &mut state, &cfg).unwrap();
        let p = params.get("p").unwrap().value.item();
        let after = (p - target).powi(2) * 0.5;
        assert!(after < before);
    }

    #[test]
    fn timestep_draws_are_uniform_within_three_sigma() {
        let k = 100usize;
        let n = 100_000usize;
        let mut counts = vec![0u32; k];
        for i in 0..n {
            let mut rng = derive_rng(17, "noise", i as u64);
            counts[draw_timestep(&mut rng, k) - 1] += 1;
        }
        let p = 1.0 / k as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (f64::from(c) - mean).abs() <= 3.0 * sigma,
                "timestep {} drawn {} times (mean {mean:.1}, sigma {sigma:.1})",
                i + 1,
                c
            );
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(build_items(&[], 8).is_err());
    }
}
