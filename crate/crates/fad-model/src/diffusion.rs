//! Diffusion schedule, forward corruption, and ancestral/respaced sampling.
//!
//! The schedule is precomputed once; all per-step coefficients are stored so
//! the plain reverse chain and the respaced sampler read identical values.
//! Respaced sampling walks a strictly increasing subset of timesteps; a span
//! of width one reuses the stored coefficients verbatim, which makes sampling
//! with S = K bit-for-bit identical to the plain chain, and S = 1 collapses
//! to the closed-form jump from x_K to the clean estimate.

use fad_core::{derive_rng, Scalar, Tensor};
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use crate::error::{ModelError, Result};

/// Noise-level progression across diffusion steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    SquaredCosine,
    Linear,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScheduleKind::SquaredCosine => "squared_cosine",
            ScheduleKind::Linear => "linear",
        };
        f.write_str(s)
    }
}

impl FromStr for ScheduleKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_cosine" => Ok(ScheduleKind::SquaredCosine),
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(ModelError::invalid(format!(
                "unknown schedule '{other}' (expected squared_cosine or linear)"
            ))),
        }
    }
}

/// Precomputed per-step coefficients, indexed by diffusion step `k` in
/// `1..=k_steps` (vectors store step `k` at position `k - 1`).
#[derive(Debug, Clone)]
pub struct Schedule<T> {
    kind: ScheduleKind,
    k_steps: usize,
    beta: Vec<T>,
    alpha: Vec<T>,
    alpha_bar: Vec<T>,
    sqrt_alpha_bar: Vec<T>,
    sqrt_one_minus_alpha_bar: Vec<T>,
    /// `1 / sqrt(alpha_k)`.
    scale: Vec<T>,
    /// `beta_k / sqrt(1 - alpha_bar_k)`.
    eps_coef: Vec<T>,
    /// Posterior std `sqrt(beta_k (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k))`.
    sigma: Vec<T>,
}

/// Largest admissible beta; the tail of the squared-cosine schedule is
/// clipped here and `alpha_bar` recomputed from the clipped betas so the
/// cumulative-product identity stays exact.
pub const BETA_MAX: f64 = 0.999;

/// Squared-cosine offset.
const COSINE_S: f64 = 0.008;

/// Linear schedule endpoints.
const LINEAR_BETA_START: f64 = 1e-4;
const LINEAR_BETA_END: f64 = 0.02;

/// Builds the schedule for `k_steps` diffusion steps.
pub fn make_schedule<T: Scalar>(k_steps: usize, kind: ScheduleKind) -> Result<Schedule<T>> {
    if k_steps == 0 {
        return Err(ModelError::invalid("k_steps must be positive"));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::SquaredCosine => {
            let f = |k: f64| {
                let t = (k / k_steps as f64 + COSINE_S) / (1.0 + COSINE_S);
                (t * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            (1..=k_steps)
                .map(|k| (1.0 - f(k as f64) / f(k as f64 - 1.0)).min(BETA_MAX))
                .collect()
        }
        ScheduleKind::Linear => {
            if k_steps == 1 {
                vec![LINEAR_BETA_START]
            } else {
                (0..k_steps)
                    .map(|i| {
                        LINEAR_BETA_START
                            + (LINEAR_BETA_END - LINEAR_BETA_START) * i as f64
                                / (k_steps - 1) as f64
                    })
                    .collect()
            }
        }
    };

    let mut beta = Vec::with_capacity(k_steps);
    let mut alpha = Vec::with_capacity(k_steps);
    let mut alpha_bar = Vec::with_capacity(k_steps);
    let mut sqrt_ab = Vec::with_capacity(k_steps);
    let mut sqrt_omab = Vec::with_capacity(k_steps);
    let mut scale = Vec::with_capacity(k_steps);
    let mut eps_coef = Vec::with_capacity(k_steps);
    let mut sigma = Vec::with_capacity(k_steps);
    let mut ab = 1.0f64;
    for (i, &b) in betas.iter().enumerate() {
        debug_assert!(b > 0.0 && b <= BETA_MAX);
        let a = 1.0 - b;
        let ab_prev = ab;
        ab *= a;
        beta.push(T::of(b));
        alpha.push(T::of(a));
        alpha_bar.push(T::of(ab));
        sqrt_ab.push(T::of(ab.sqrt()));
        sqrt_omab.push(T::of((1.0 - ab).sqrt()));
        scale.push(T::of(1.0 / a.sqrt()));
        eps_coef.push(T::of(b / (1.0 - ab).sqrt()));
        let var = if i == 0 {
            0.0
        } else {
            b * (1.0 - ab_prev) / (1.0 - ab)
        };
        sigma.push(T::of(var.sqrt()));
    }
    Ok(Schedule {
        kind,
        k_steps,
        beta,
        alpha,
        alpha_bar,
        sqrt_alpha_bar: sqrt_ab,
        sqrt_one_minus_alpha_bar: sqrt_omab,
        scale,
        eps_coef,
        sigma,
    })
}

impl<T: Scalar> Schedule<T> {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn k_steps(&self) -> usize {
        self.k_steps
    }

    fn check_step(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_steps {
            return Err(ModelError::invalid(format!(
                "diffusion step {k} out of range 1..={}",
                self.k_steps
            )));
        }
        Ok(())
    }

    pub fn beta(&self, k: usize) -> T {
        self.beta[k - 1]
    }

    pub fn alpha(&self, k: usize) -> T {
        self.alpha[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> T {
        self.alpha_bar[k - 1]
    }

    /// `alpha_bar_{k-1}`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar_prev(&self, k: usize) -> T {
        if k == 1 {
            T::one()
        } else {
            self.alpha_bar[k - 2]
        }
    }

    pub fn sigma(&self, k: usize) -> T {
        self.sigma[k - 1]
    }
}

/// Forward corruption: `x_k = sqrt(ab_k) x0 + sqrt(1 - ab_k) eps`.
pub fn q_sample<T: Scalar>(
    x0: &Tensor<T>,
    k: usize,
    eps: &Tensor<T>,
    sched: &Schedule<T>,
) -> Result<Tensor<T>> {
    sched.check_step(k)?;
    if x0.shape() != eps.shape() {
        return Err(ModelError::invalid(format!(
            "x0 shape {:?} does not match eps shape {:?}",
            x0.shape(),
            eps.shape()
        )));
    }
    let a = sched.sqrt_alpha_bar[k - 1];
    let b = sched.sqrt_one_minus_alpha_bar[k - 1];
    Ok(x0.zip_map(eps, |x, e| a * x + b * e)?)
}

/// One ancestral reverse step from `x_k` to `x_{k-1}`.
///
/// `noise` is scaled by the posterior std, which is exactly zero at `k = 1`,
/// so the final step is deterministic regardless of the buffer passed.
pub fn reverse_step<T: Scalar>(
    xk: &Tensor<T>,
    k: usize,
    eps_hat: &Tensor<T>,
    sched: &Schedule<T>,
    noise: &Tensor<T>,
) -> Result<Tensor<T>> {
    sched.check_step(k)?;
    if xk.shape() != eps_hat.shape() || xk.shape() != noise.shape() {
        return Err(ModelError::invalid(format!(
            "xk shape {:?}, eps_hat shape {:?}, and noise shape {:?} must match",
            xk.shape(),
            eps_hat.shape(),
            noise.shape()
        )));
    }
    let scale = sched.scale[k - 1];
    let coef = sched.eps_coef[k - 1];
    let sigma = sched.sigma[k - 1];
    let out = xk.zip_map(eps_hat, |x, e| scale * (x - coef * e))?;
    Ok(out.zip_map(noise, |m, n| m + sigma * n)?)
}

/// A noise predictor the sampler can query.
pub trait Denoiser<T: Scalar> {
    /// Predicts the noise component of `xk` at diffusion step `k` under
    /// condition `m`.
    fn denoise(&self, xk: &Tensor<T>, k: usize, m: &Tensor<T>) -> Result<Tensor<T>>;

    /// Columns of the motion matrix this denoiser operates on.
    fn motion_dim(&self) -> usize;
}

/// Wraps a denoiser and counts invocations.
pub struct CountingDenoiser<D> {
    inner: D,
    calls: Cell<usize>,
}

impl<D> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        CountingDenoiser {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<T: Scalar, D: Denoiser<T>> Denoiser<T> for CountingDenoiser<D> {
    fn denoise(&self, xk: &Tensor<T>, k: usize, m: &Tensor<T>) -> Result<Tensor<T>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.denoise(xk, k, m)
    }

    fn motion_dim(&self) -> usize {
        self.inner.motion_dim()
    }
}

/// Denoiser built from a closure; handy for oracles and benchmarks.
pub struct ClosureDenoiser<T, F>
where
    F: Fn(&Tensor<T>, usize, &Tensor<T>) -> Tensor<T>,
{
    f: F,
    dim: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar, F> ClosureDenoiser<T, F>
where
    F: Fn(&Tensor<T>, usize, &Tensor<T>) -> Tensor<T>,
{
    pub fn new(dim: usize, f: F) -> Self {
        ClosureDenoiser {
            f,
            dim,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar, F> Denoiser<T> for ClosureDenoiser<T, F>
where
    F: Fn(&Tensor<T>, usize, &Tensor<T>) -> Tensor<T>,
{
    fn denoise(&self, xk: &Tensor<T>, k: usize, m: &Tensor<T>) -> Result<Tensor<T>> {
        Ok((self.f)(xk, k, m))
    }

    fn motion_dim(&self) -> usize {
        self.dim
    }
}

/// The `s` timesteps visited by respaced sampling, ascending: a leading
/// stride over `1..=k_steps` (`tau_j = 1 + floor(j*k_steps/s)`), so every
/// ladder starts at step 1 and `s = k_steps` is the identity ladder.
///
/// For `1 < s < k_steps` the top rung deliberately stops short of `k_steps`:
/// the squared-cosine `alpha_bar` collapses to ~1e-7 at the terminal step, so
/// a rung ending there would scale the first update by
/// `sqrt(alpha_bar_tau / alpha_bar_K)` (hundreds) and amplify any denoiser
/// imperfection into divergence. Starting from the `tau_{s-1}` marginal costs
/// only the tiny `sqrt(alpha_bar_tau)` signal term. `s = 1` stays the
/// closed-form jump from `k_steps` itself.
pub fn respaced_steps(k_steps: usize, s: usize) -> Result<Vec<usize>> {
    if s == 0 || s > k_steps {
        return Err(ModelError::invalid(format!(
            "step count {s} out of range 1..={k_steps}"
        )));
    }
    if s == 1 {
        return Ok(vec![k_steps]);
    }
    let taus: Vec<usize> = (0..s).map(|j| 1 + j * k_steps / s).collect();
    debug_assert!(taus.windows(2).all(|w| w[0] < w[1]));
    Ok(taus)
}

/// Generates one motion clip by running the denoiser for `s` steps.
///
/// Starts from Gaussian noise seeded by `seed` and walks the respaced
/// timestep ladder. Each rung spanning a single step reuses the schedule's
/// stored coefficients (so `s = k_steps` reproduces the plain chain exactly);
/// wider rungs use the marginal ratio `alpha' = ab_tau / ab_tau_prev`. The
/// final rung is always deterministic. The denoiser is called exactly `s`
/// times.
pub fn sample<T: Scalar, D: Denoiser<T>>(
    denoiser: &D,
    m: &Tensor<T>,
    s: usize,
    sched: &Schedule<T>,
    seed: u64,
) -> Result<Tensor<T>> {
    if m.rank() != 2 {
        return Err(ModelError::invalid(
            "condition must be a rank-2 [l, d_m] matrix",
        ));
    }
    let l = m.shape()[0];
    let dim = denoiser.motion_dim();
    let taus = respaced_steps(sched.k_steps(), s)?;
    let mut rng = derive_rng(seed, "sample", 0);
    let mut x = Tensor::<T>::randn(vec![l, dim], &mut rng);
    for j in (0..taus.len()).rev() {
        let tau = taus[j];
        let tau_prev = if j > 0 { taus[j - 1] } else { 0 };
        let eps_hat = denoiser.denoise(&x, tau, m)?;
        if eps_hat.shape() != x.shape() {
            return Err(ModelError::invalid(format!(
                "denoiser returned shape {:?}, expected {:?}",
                eps_hat.shape(),
                x.shape()
            )));
        }
        if tau - tau_prev == 1 {
            let noise = if j > 0 {
                Tensor::randn(vec![l, dim], &mut rng)
            } else {
                Tensor::zeros(vec![l, dim])
            };
            x = reverse_step(&x, tau, &eps_hat, sched, &noise)?;
        } else {
            let ab_t = sched.alpha_bar(tau).as_f64();
            let ab_p = if tau_prev == 0 {
                1.0
            } else {
                sched.alpha_bar(tau_prev).as_f64()
            };
            let beta = 1.0 - ab_t / ab_p;
            let scale = T::of(1.0 / (ab_t / ab_p).sqrt());
            let coef = T::of(beta / (1.0 - ab_t).sqrt());
            let sigma = T::of((beta * (1.0 - ab_p) / (1.0 - ab_t)).sqrt());
            let mut next = x.zip_map(&eps_hat, |xv, e| scale * (xv - coef * e))?;
            if j > 0 {
                let noise = Tensor::<T>::randn(vec![l, dim], &mut rng);
                next = next.zip_map(&noise, |v, n| v + sigma * n)?;
            }
            x = next;
        }
    }
    Ok(x)
}

/// Noise-prediction training loss: corrupt `x0` to step `k` with `eps` and
/// score the denoiser's prediction by mean squared error against `eps`.
pub fn training_loss<T: Scalar, D: Denoiser<T>>(
    denoiser: &D,
    x0: &Tensor<T>,
    m: &Tensor<T>,
    k: usize,
    eps: &Tensor<T>,
    sched: &Schedule<T>,
) -> Result<T> {
    let xk = q_sample(x0, k, eps, sched)?;
    let eps_hat = denoiser.denoise(&xk, k, m)?;
    fad_core::ops::mse(&eps_hat, eps).map_err(ModelError::from)
}
