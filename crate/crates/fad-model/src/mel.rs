//! Log-mel spectrogram audio features.
//!
//! One feature row per video frame: a Hann-windowed FFT frame is centered on
//! the audio sample that sits half a frame past the video frame's start, so
//! row `t` summarizes the audio spoken during video frame `t`. Power spectra
//! are pooled through an HTK-style triangular mel filterbank (no area
//! normalization) and floored before the log so silence is finite.

use fad_core::{Tensor32, FPS, SAMPLE_RATE};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{ModelError, Result};

/// Power floor applied before the log; silence maps to `ln(LOG_FLOOR)`.
pub const LOG_FLOOR: f64 = 1e-10;

/// Mel filterbank and framing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub fft_size: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: SAMPLE_RATE,
            n_mels: 128,
            fft_size: 1024,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(ModelError::config("fft_size must be a power of two >= 2"));
        }
        if self.n_mels == 0 {
            return Err(ModelError::config("n_mels must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(ModelError::config("sample_rate must be positive"));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(ModelError::config(
                "mel band must satisfy 0 <= fmin < fmax <= sample_rate / 2",
            ));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0_f64.powf(m / 2595.0) - 1.0)
}

/// Center frequency of mel filter `m` (for tests and diagnostics).
pub fn mel_center_hz(m: usize, cfg: &MelConfig) -> f64 {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    mel_to_hz(lo + step * (m + 1) as f64)
}

/// Reusable extractor holding the FFT plan, window, and sparse filterbank.
pub struct MelExtractor {
    cfg: MelConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Per-mel list of `(fft bin, triangle weight)` with nonzero weight.
    filters: Vec<Vec<(usize, f64)>>,
}

impl MelExtractor {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_size;
        let fft = FftPlanner::new().plan_fft_forward(n);
        // Periodic Hann window.
        let window: Vec<f64> = (0..n)
            .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
            .collect();

        let n_bins = n / 2 + 1;
        let bin_hz = f64::from(cfg.sample_rate) / n as f64;
        let lo = hz_to_mel(cfg.fmin);
        let hi = hz_to_mel(cfg.fmax);
        let step = (hi - lo) / (cfg.n_mels + 1) as f64;
        let edge = |i: usize| mel_to_hz(lo + step * i as f64);
        let mut filters = Vec::with_capacity(cfg.n_mels);
        for m in 0..cfg.n_mels {
            let (left, center, right) = (edge(m), edge(m + 1), edge(m + 2));
            let mut taps = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - left) / (center - left)).min((right - f) / (right - center));
                if w > 0.0 {
                    taps.push((k, w));
                }
            }
            filters.push(taps);
        }
        Ok(MelExtractor {
            cfg: cfg.clone(),
            fft,
            window,
            filters,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// Log-mel features, one row per video frame: `[n_frames, n_mels]`.
    ///
    /// Frame `t` is centered on sample `round((t + 0.5) * sample_rate / FPS)`
    /// of `audio`; samples outside the buffer are treated as silence.
    pub fn extract(&self, audio: &[f32], n_frames: usize) -> Result<Tensor32> {
        if n_frames == 0 {
            return Err(ModelError::invalid("n_frames must be positive"));
        }
        let n = self.cfg.fft_size;
        let half = (n / 2) as i64;
        let samples_per_frame = f64::from(self.cfg.sample_rate) / f64::from(FPS);
        let mut out = vec![0.0f32; n_frames * self.cfg.n_mels];
        let mut buf = vec![Complex64::default(); n];
        let mut power = vec![0.0f64; n / 2 + 1];
        for t in 0..n_frames {
            let center = ((t as f64 + 0.5) * samples_per_frame).round() as i64;
            for (j, slot) in buf.iter_mut().enumerate() {
                let idx = center - half + j as i64;
                let s = if idx >= 0 && (idx as usize) < audio.len() {
                    f64::from(audio[idx as usize])
                } else {
                    0.0
                };
                *slot = Complex64::new(s * self.window[j], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            for (m, taps) in self.filters.iter().enumerate() {
                let energy: f64 = taps.iter().map(|&(k, w)| w * power[k]).sum();
                out[t * self.cfg.n_mels + m] = energy.max(LOG_FLOOR).ln() as f32;
            }
        }
        Tensor32::new(vec![n_frames, self.cfg.n_mels], out).map_err(ModelError::from)
    }
}

/// One-shot convenience over [`MelExtractor`].
pub fn mel_spectrogram(audio: &[f32], n_frames: usize, cfg: &MelConfig) -> Result<Tensor32> {
    MelExtractor::new(cfg)?.extract(audio, n_frames)
}

/// Analytic FLOPs for extracting `l` feature rows: windowing (N mults), the
/// radix-2 FFT estimate `5 N log2 N`, power spectra (3 per bin), and the
/// filterbank counted dense at 2 FLOPs per (mel, bin) pair.
pub fn mel_flops(cfg: &MelConfig, l: usize) -> u64 {
    let n = cfg.fft_size as u64;
    let bins = n / 2 + 1;
    let per_frame = n + 5 * n * n.trailing_zeros() as u64 + 3 * bins + 2 * cfg.n_mels as u64 * bins;
    per_frame * l as u64
}
