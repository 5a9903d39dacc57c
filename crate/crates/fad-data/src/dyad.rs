//! Synthetic dyadic-conversation generator.
//!
//! Each sequence is driven by a smooth latent trajectory `z`: the speaker's
//! motion, video, and audio are all deterministic readouts of `z_t`, and the
//! listener's motion is a fixed linear coupling of `z_{t-d}` plus smoothed
//! noise. The delay `d` and coupling matrix are known, so downstream metrics
//! and learning checks have exact targets. Within a corpus the coupling is
//! shared across sequences — it is the speaker-to-listener law a model can
//! learn from training sequences and apply to held-out ones — while latents,
//! speaker maps, and noise vary per sequence.

use fad_core::{derive_rng, frame_to_sample, Tensor32, MOTION_DIM, SAMPLE_RATE};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{DataError, Result};

/// Side length of the square grayscale speaker frames.
pub const RESOLUTION: usize = 96;
pub const DEFAULT_DELAY: usize = 4;
pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_SMOOTHING: f32 = 0.35;
pub const DEFAULT_NOISE_SIGMA: f32 = 0.02;
/// Scale of the i.i.d. jitter folded into the latent trajectory.
const LATENT_JITTER: f32 = 0.02;
/// Sinusoid components per latent dimension.
const WAVES_PER_DIM: usize = 3;

/// Parameters of one generated dyad sequence.
#[derive(Debug, Clone)]
pub struct DyadParams {
    pub seed: u64,
    /// Sequence length T in frames.
    pub frames: usize,
    /// Listener reaction lag d in frames; 0 < d < T.
    pub delay: usize,
    /// `[56, latent_dim]` mixing matrix from latent to listener motion.
    pub coupling: Tensor32,
    /// EMA coefficient in (0, 1); larger tracks faster.
    pub smoothing: f32,
    /// Standard deviation of the listener's additive noise.
    pub noise_sigma: f32,
    pub latent_dim: usize,
}

impl DyadParams {
    /// Defaults with the coupling matrix drawn from the seed's own stream.
    pub fn new(seed: u64, frames: usize) -> Self {
        let mut rng = derive_rng(seed, "coupling", 0);
        let coupling = Tensor32::randn(vec![MOTION_DIM, DEFAULT_LATENT_DIM], &mut rng);
        DyadParams {
            seed,
            frames,
            delay: DEFAULT_DELAY,
            coupling,
            smoothing: DEFAULT_SMOOTHING,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            latent_dim: DEFAULT_LATENT_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay == 0 || self.delay >= self.frames {
            return Err(DataError::invalid(format!(
                "delay must satisfy 0 < d < T, got d={} with T={}",
                self.delay, self.frames
            )));
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return Err(DataError::invalid(format!(
                "smoothing must lie in (0, 1), got {}",
                self.smoothing
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(DataError::invalid(format!(
                "noise_sigma must be a finite non-negative value, got {}",
                self.noise_sigma
            )));
        }
        if self.latent_dim == 0 {
            return Err(DataError::invalid("latent_dim must be positive"));
        }
        if self.coupling.shape() != [MOTION_DIM, self.latent_dim] {
            return Err(DataError::invalid(format!(
                "coupling must be [{MOTION_DIM}, {}], got {:?}",
                self.latent_dim,
                self.coupling.shape()
            )));
        }
        Ok(())
    }
}

/// One generated dyad: everything the pipeline consumes for a sequence.
#[derive(Debug, Clone)]
pub struct DyadSequence {
    pub seed: u64,
    /// `[T, 1, 96, 96]` grayscale speaker frames in `[0, 1]`.
    pub speaker_frames: Tensor32,
    /// Mono speaker audio, `frame_to_sample(T)` samples at 16 kHz.
    pub speaker_audio: Vec<f32>,
    /// `[T, 56]` speaker motion coefficients.
    pub speaker_motion: Tensor32,
    /// `[T, 56]` listener motion coefficients.
    pub listener_motion: Tensor32,
}

/// The shared latent trajectory `z`: per dimension a seeded mixture of
/// sinusoids plus small jitter, EMA-smoothed along time. `[T, latent_dim]`.
pub fn latent_trajectory(params: &DyadParams) -> Result<Tensor32> {
    params.validate()?;
    let t = params.frames;
    let dim = params.latent_dim;
    let mut wave_rng = derive_rng(params.seed, "latent", 0);
    let mut waves = Vec::with_capacity(dim * WAVES_PER_DIM);
    for _ in 0..dim * WAVES_PER_DIM {
        let amp: f32 = wave_rng.random_range(0.3..1.0);
        let freq: f32 = wave_rng.random_range(0.02..0.25);
        let phase: f32 = wave_rng.random_range(0.0..std::f32::consts::TAU);
        waves.push((amp, freq, phase));
    }
    let mut jitter_rng = derive_rng(params.seed, "latent-jitter", 0);
    let mut data = vec![0.0f32; t * dim];
    for f in 0..t {
        for j in 0..dim {
            let mut v = 0.0f32;
            for w in 0..WAVES_PER_DIM {
                let (amp, freq, phase) = waves[j * WAVES_PER_DIM + w];
                v += amp * (freq * f as f32 + phase).sin();
            }
            v /= WAVES_PER_DIM as f32;
            let jitter: f32 = jitter_rng.sample(StandardNormal);
            data[f * dim + j] = v + LATENT_JITTER * jitter;
        }
    }
    // EMA along time, seeded with the first raw row.
    let a = params.smoothing;
    for f in 1..t {
        for j in 0..dim {
            data[f * dim + j] = (1.0 - a) * data[(f - 1) * dim + j] + a * data[f * dim + j];
        }
    }
    Ok(Tensor32::new(vec![t, dim], data)?)
}

/// `coupling . z_row`, accumulated in f64 and cast once.
fn couple_row(coupling: &Tensor32, z: &[f32]) -> Vec<f32> {
    let dim = z.len();
    (0..MOTION_DIM)
        .map(|r| {
            let mut acc = 0.0f64;
            for (j, &v) in z.iter().enumerate() {
                acc += f64::from(coupling.data()[r * dim + j]) * f64::from(v);
            }
            acc as f32
        })
        .collect()
}

fn render_frames(z: &Tensor32) -> Tensor32 {
    let t = z.shape()[0];
    let dim = z.shape()[1];
    let res = RESOLUTION;
    let half = res as f32 / 2.0;
    let mut data = vec![0.0f32; t * res * res];
    for f in 0..t {
        let zf = &z.data()[f * dim..(f + 1) * dim];
        let cx = half + half * 0.5 * zf[0].tanh();
        let cy = half + half * 0.5 * zf[1 % dim].tanh();
        let radius = 12.0 + 5.0 * zf[2 % dim].tanh();
        let inv = 1.0 / (2.0 * radius * radius);
        for y in 0..res {
            for x in 0..res {
                let dx = x as f32 + 0.5 - cx;
                let dy = y as f32 + 0.5 - cy;
                data[f * res * res + y * res + x] = (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    Tensor32::new(vec![t, 1, res, res], data).expect("frame buffer matches its shape")
}

fn render_audio(z: &Tensor32) -> Vec<f32> {
    let t = z.shape()[0];
    let dim = z.shape()[1];
    let n_tones = dim.min(8);
    let freqs: Vec<f32> = (0..n_tones).map(|j| 220.0 * (j + 1) as f32).collect();
    let total = frame_to_sample(t);
    let mut audio = vec![0.0f32; total];
    for f in 0..t {
        let zf = &z.data()[f * dim..(f + 1) * dim];
        let amps: Vec<f32> = (0..n_tones)
            .map(|j| 0.5 * (1.0 + zf[j].tanh()) / n_tones as f32)
            .collect();
        for s in frame_to_sample(f)..frame_to_sample(f + 1) {
            let time = s as f32 / SAMPLE_RATE as f32;
            let mut v = 0.0f32;
            for (j, &fr) in freqs.iter().enumerate() {
                v += amps[j] * (std::f32::consts::TAU * fr * time).sin();
            }
            audio[s] = v;
        }
    }
    audio
}

/// Generates one dyad sequence; bit-identical for identical params.
pub fn generate_dyad(params: &DyadParams) -> Result<DyadSequence> {
    let z = latent_trajectory(params)?;
    let t = params.frames;
    let dim = params.latent_dim;

    let speaker_frames = render_frames(&z);
    let speaker_audio = render_audio(&z);

    // Speaker motion: a fixed affine readout of the current latent.
    let mut map_rng = derive_rng(params.seed, "speaker-map", 0);
    let map_w = Tensor32::randn(vec![MOTION_DIM, dim], &mut map_rng);
    let map_b = Tensor32::randn(vec![MOTION_DIM], &mut map_rng);
    let scale = 1.0 / (dim as f32).sqrt();
    let mut speaker = Vec::with_capacity(t * MOTION_DIM);
    for f in 0..t {
        let row = couple_row(&map_w, &z.data()[f * dim..(f + 1) * dim]);
        for (r, v) in row.into_iter().enumerate() {
            speaker.push(scale * v + 0.1 * map_b.data()[r]);
        }
    }
    let speaker_motion = Tensor32::new(vec![t, MOTION_DIM], speaker)?;

    // Listener motion: coupling applied to the latent delayed by d (clamped
    // at the start), plus EMA-smoothed noise so the track stays temporally
    // coherent. With noise_sigma = 0 it is exactly coupling . z_{t-d}.
    let mut noise_rng = derive_rng(params.seed, "dyad-noise", 0);
    let mut noise = vec![0.0f32; t * MOTION_DIM];
    if params.noise_sigma > 0.0 {
        for v in &mut noise {
            let n: f32 = noise_rng.sample(StandardNormal);
            *v = params.noise_sigma * n;
        }
        let a = params.smoothing;
        for f in 1..t {
            for c in 0..MOTION_DIM {
                noise[f * MOTION_DIM + c] =
                    (1.0 - a) * noise[(f - 1) * MOTION_DIM + c] + a * noise[f * MOTION_DIM + c];
            }
        }
    }
    let mut listener = Vec::with_capacity(t * MOTION_DIM);
    for f in 0..t {
        let src = f.saturating_sub(params.delay);
        let row = couple_row(&params.coupling, &z.data()[src * dim..(src + 1) * dim]);
        for (c, v) in row.into_iter().enumerate() {
            listener.push(v + noise[f * MOTION_DIM + c]);
        }
    }
    let listener_motion = Tensor32::new(vec![t, MOTION_DIM], listener)?;

    Ok(DyadSequence {
        seed: params.seed,
        speaker_frames,
        speaker_audio,
        speaker_motion,
        listener_motion,
    })
}

/// A generated corpus plus the settings shared by its sequences.
#[derive(Debug, Clone)]
pub struct DyadCorpus {
    pub seed: u64,
    pub frames: usize,
    pub delay: usize,
    pub noise_sigma: f32,
    pub sequences: Vec<DyadSequence>,
}

/// Generates `sequences` dyads with per-sequence seeds derived from `seed`.
///
/// All sequences share one coupling matrix drawn from the corpus seed, so the
/// listener law generalizes across the train/test split; everything else
/// (latents, speaker maps, noise) comes from the per-sequence streams.
pub fn generate_corpus(
    seed: u64,
    sequences: usize,
    frames: usize,
    delay: usize,
    noise_sigma: f32,
) -> Result<DyadCorpus> {
    if sequences == 0 {
        return Err(DataError::invalid("corpus needs at least one sequence"));
    }
    let mut coupling_rng = derive_rng(seed, "coupling", 0);
    let coupling = Tensor32::randn(vec![MOTION_DIM, DEFAULT_LATENT_DIM], &mut coupling_rng);
    let mut out = Vec::with_capacity(sequences);
    for i in 0..sequences {
        let seq_seed = fad_core::derive_seed(seed, "sequence", i as u64);
        let mut params = DyadParams::new(seq_seed, frames);
        params.coupling = coupling.clone();
        params.delay = delay;
        params.noise_sigma = noise_sigma;
        out.push(generate_dyad(&params)?);
    }
    Ok(DyadCorpus {
        seed,
        frames,
        delay,
        noise_sigma,
        sequences: out,
    })
}
