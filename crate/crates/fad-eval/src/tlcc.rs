//! Time-lagged cross-correlation between speaker and listener motion.
//!
//! Each `[T, D]` sequence is reduced to a 1-D activity trace (per-frame L2
//! norm after column mean-centering); the peak Pearson correlation over lags
//! in `[-max_lag, max_lag]` is reported together with its lag. A positive lag
//! means the listener trails the speaker.

use fad_core::Tensor32;

use crate::error::{EvalError, Result};

pub const TLCC_DEFAULT_MAX_LAG: usize = 30;

/// Per-frame L2 norm of the column-mean-centered coefficient matrix.
fn norm_trace(motion: &Tensor32) -> Result<Vec<f64>> {
    if motion.rank() != 2 {
        return Err(EvalError::invalid(format!(
            "motion must be [T, D], got {:?}",
            motion.shape()
        )));
    }
    let t = motion.shape()[0];
    let d = motion.shape()[1];
    if t == 0 || d == 0 {
        return Err(EvalError::invalid("motion must be non-empty"));
    }
    let mut col_mean = vec![0.0f64; d];
    for r in 0..t {
        for (c, m) in col_mean.iter_mut().enumerate() {
            *m += f64::from(motion.data()[r * d + c]);
        }
    }
    for m in &mut col_mean {
        *m /= t as f64;
    }
    Ok((0..t)
        .map(|r| {
            let mut sq = 0.0f64;
            for (c, m) in col_mean.iter().enumerate() {
                let v = f64::from(motion.data()[r * d + c]) - m;
                sq += v * v;
            }
            sq.sqrt()
        })
        .collect())
}

/// Pearson correlation of two equal-length windows; `None` when either side
/// has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Peak time-lagged cross-correlation `(corr, lag)` between a listener and a
/// speaker sequence of the same length.
///
/// Lags are scanned in the order `0, 1, -1, 2, -2, ...` with a strict
/// improvement rule, so exact ties resolve to the smallest `|lag|` (positive
/// first). Requires `T > 2 * max_lag`; a constant activity trace on either
/// side is rejected as degenerate.
pub fn tlcc(listener: &Tensor32, speaker: &Tensor32, max_lag: usize) -> Result<(f64, i64)> {
    let lt = norm_trace(listener)?;
    let st = norm_trace(speaker)?;
    if lt.len() != st.len() {
        return Err(EvalError::invalid(format!(
            "sequence lengths differ: listener {} vs speaker {}",
            lt.len(),
            st.len()
        )));
    }
    let t = lt.len();
    if t <= 2 * max_lag {
        return Err(EvalError::invalid(format!(
            "need T > 2*max_lag frames, got T={t} with max_lag={max_lag}"
        )));
    }
    let ssd = |trace: &[f64]| -> f64 {
        let m = trace.iter().sum::<f64>() / trace.len() as f64;
        trace.iter().map(|&v| (v - m) * (v - m)).sum()
    };
    if ssd(&lt) == 0.0 || ssd(&st) == 0.0 {
        return Err(EvalError::Degenerate("constant activity trace".into()));
    }

    let mut lags = vec![0i64];
    for l in 1..=max_lag as i64 {
        lags.push(l);
        lags.push(-l);
    }
    let mut best: Option<(f64, i64)> = None;
    for lag in lags {
        let shift = lag.unsigned_abs() as usize;
        // Positive lag: the listener trails, so listener[lag..] aligns with
        // speaker[..T-lag]; negative lag mirrors the windows.
        let corr = if lag >= 0 {
            pearson(&st[..t - shift], &lt[shift..])
        } else {
            pearson(&st[shift..], &lt[..t - shift])
        };
        if let Some(c) = corr {
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, lag));
            }
        }
    }
    best.ok_or_else(|| EvalError::Degenerate("no lag with finite correlation".into()))
}
