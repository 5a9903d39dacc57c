//! ELNet: a lightweight 1-D U-Net noise predictor over motion sequences.
//!
//! The noisy motion `[l, 56]` and the condition `[l, 320]` are concatenated
//! per frame and transposed to channels-first `[376, l]`. A stem conv lifts
//! that to `base_width` channels; each encoder stage applies residual blocks
//! and halves the temporal length with a stride-2 conv; the decoder mirrors
//! it with nearest-neighbor upsampling and skip concatenation. Every residual
//! block receives the diffusion step through an additive per-channel bias
//! computed from a shared sinusoidal embedding. A zero-initialized 1x1 conv
//! head makes the network predict zero noise at initialization.

use fad_core::{Graph, Scalar, Tensor, Var, MOTION_DIM};
use serde::{Deserialize, Serialize};

use crate::bind::Bound;
use crate::error::{ModelError, Result};
use crate::init::{Init, ParamSpec};

/// GroupNorm variance epsilon used throughout the network.
pub const GN_EPS: f64 = 1e-5;

/// Architecture of the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ELNetConfig {
    /// Channels of the signal being denoised.
    pub motion_channels: usize,
    /// Channels of the conditioning embedding.
    pub cond_channels: usize,
    /// Channel width at full temporal resolution; doubles per stage.
    pub base_width: usize,
    /// Number of stride-2 downsampling stages.
    pub depth: usize,
    /// Residual blocks per stage.
    pub res_blocks: usize,
    /// GroupNorm group count; must divide every stage width.
    pub groups: usize,
    /// Sinusoidal timestep embedding width.
    pub time_embed_dim: usize,
}

impl Default for ELNetConfig {
    fn default() -> Self {
        ELNetConfig {
            motion_channels: MOTION_DIM,
            cond_channels: 320,
            base_width: 64,
            depth: 2,
            res_blocks: 2,
            groups: 8,
            time_embed_dim: 128,
        }
    }
}

impl ELNetConfig {
    /// Channels after the per-frame concat of motion and condition.
    pub fn in_channels(&self) -> usize {
        self.motion_channels + self.cond_channels
    }

    /// Channel width of stage `s` (stage `depth` is the bottleneck).
    pub fn width(&self, s: usize) -> usize {
        self.base_width << s
    }

    pub fn validate(&self) -> Result<()> {
        if self.motion_channels == 0 || self.cond_channels == 0 {
            return Err(ModelError::config("channel counts must be positive"));
        }
        if self.base_width == 0 || self.res_blocks == 0 {
            return Err(ModelError::config(
                "base_width and res_blocks must be positive",
            ));
        }
        if self.depth == 0 {
            return Err(ModelError::config("depth must be at least 1"));
        }
        if self.groups == 0 || self.base_width % self.groups != 0 {
            return Err(ModelError::config(
                "groups must be positive and divide base_width",
            ));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(ModelError::config("time_embed_dim must be even and >= 2"));
        }
        Ok(())
    }

    /// Parameter manifest in canonical order.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let d = self.time_embed_dim;
        let mut specs = Vec::new();
        for i in 0..2 {
            specs.push(ParamSpec::new(
                format!("elnet.time_mlp.{i}.w"),
                vec![d, d],
                Init::KaimingNormal { fan_in: d },
            ));
            specs.push(ParamSpec::new(
                format!("elnet.time_mlp.{i}.b"),
                vec![d],
                Init::Zeros,
            ));
        }
        push_conv(&mut specs, "elnet.stem", self.width(0), self.in_channels(), 3);
        for s in 0..self.depth {
            for r in 0..self.res_blocks {
                push_res_block(
                    &mut specs,
                    &format!("elnet.enc{s}.rb{r}"),
                    self.width(s),
                    self.width(s),
                    d,
                );
            }
            push_conv(
                &mut specs,
                &format!("elnet.down{s}"),
                self.width(s + 1),
                self.width(s),
                3,
            );
        }
        for r in 0..self.res_blocks {
            push_res_block(
                &mut specs,
                &format!("elnet.mid.rb{r}"),
                self.width(self.depth),
                self.width(self.depth),
                d,
            );
        }
        for s in (0..self.depth).rev() {
            push_conv(
                &mut specs,
                &format!("elnet.up{s}"),
                self.width(s),
                self.width(s + 1),
                3,
            );
            for r in 0..self.res_blocks {
                let c_in = if r == 0 { 2 * self.width(s) } else { self.width(s) };
                push_res_block(
                    &mut specs,
                    &format!("elnet.dec{s}.rb{r}"),
                    c_in,
                    self.width(s),
                    d,
                );
            }
        }
        specs.push(ParamSpec::new(
            "elnet.final.gn.gamma",
            vec![self.width(0)],
            Init::Ones,
        ));
        specs.push(ParamSpec::new(
            "elnet.final.gn.beta",
            vec![self.width(0)],
            Init::Zeros,
        ));
        // Zero-initialized head: the untrained denoiser predicts zero noise.
        specs.push(ParamSpec::new(
            "elnet.final.w",
            vec![self.motion_channels, self.width(0), 1],
            Init::Zeros,
        ));
        specs.push(ParamSpec::new(
            "elnet.final.b",
            vec![self.motion_channels],
            Init::Zeros,
        ));
        specs
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.manifest()
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }
}

fn push_conv(specs: &mut Vec<ParamSpec>, prefix: &str, c_out: usize, c_in: usize, k: usize) {
    specs.push(ParamSpec::new(
        format!("{prefix}.w"),
        vec![c_out, c_in, k],
        Init::KaimingNormal { fan_in: c_in * k },
    ));
    specs.push(ParamSpec::new(format!("{prefix}.b"), vec![c_out], Init::Zeros));
}

fn push_res_block(specs: &mut Vec<ParamSpec>, prefix: &str, c_in: usize, c_out: usize, d: usize) {
    push_conv(specs, &format!("{prefix}.conv1"), c_out, c_in, 3);
    specs.push(ParamSpec::new(
        format!("{prefix}.gn1.gamma"),
        vec![c_out],
        Init::Ones,
    ));
    specs.push(ParamSpec::new(
        format!("{prefix}.gn1.beta"),
        vec![c_out],
        Init::Zeros,
    ));
    specs.push(ParamSpec::new(
        format!("{prefix}.time.w"),
        vec![c_out, d],
        Init::KaimingNormal { fan_in: d },
    ));
    specs.push(ParamSpec::new(
        format!("{prefix}.time.b"),
        vec![c_out],
        Init::Zeros,
    ));
    push_conv(specs, &format!("{prefix}.conv2"), c_out, c_out, 3);
    specs.push(ParamSpec::new(
        format!("{prefix}.gn2.gamma"),
        vec![c_out],
        Init::Ones,
    ));
    specs.push(ParamSpec::new(
        format!("{prefix}.gn2.beta"),
        vec![c_out],
        Init::Zeros,
    ));
    if c_in != c_out {
        push_conv(specs, &format!("{prefix}.skip"), c_out, c_in, 1);
    }
}

/// Sinusoidal embedding of diffusion step `k`: `dim/2` sines then `dim/2`
/// cosines at geometrically spaced frequencies `exp(-ln(10000) * i / half)`.
pub fn timestep_embedding<T: Scalar>(k: usize, dim: usize) -> Result<Tensor<T>> {
    if dim < 2 || dim % 2 != 0 {
        return Err(ModelError::invalid("embedding dim must be even and >= 2"));
    }
    let half = dim / 2;
    let mut data = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(10000.0f64.ln()) * i as f64 / half as f64).exp();
        let angle = k as f64 * freq;
        data[i] = T::of(angle.sin());
        data[half + i] = T::of(angle.cos());
    }
    Tensor::new(vec![dim], data).map_err(ModelError::from)
}

/// Switches for architectural ablation tests.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseOptions {
    /// When false, skip connections are replaced by zeros of the same shape,
    /// isolating their contribution without changing any weight shapes.
    pub use_skips: bool,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        DenoiseOptions { use_skips: true }
    }
}

/// One residual block: conv -> GN -> SiLU -> +time bias -> conv -> GN -> SiLU,
/// plus the (possibly 1x1-projected) residual path.
fn res_block<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    t_emb: Var,
    groups: usize,
) -> Result<Var> {
    let eps = T::of(GN_EPS);
    let mut h = g.conv1d(
        x,
        p.var(&format!("{prefix}.conv1.w"))?,
        p.var(&format!("{prefix}.conv1.b"))?,
        1,
        1,
    )?;
    h = g.group_norm(
        h,
        groups,
        p.var(&format!("{prefix}.gn1.gamma"))?,
        p.var(&format!("{prefix}.gn1.beta"))?,
        eps,
    )?;
    h = g.silu(h);
    let tb = g.linear(
        t_emb,
        p.var(&format!("{prefix}.time.w"))?,
        p.var(&format!("{prefix}.time.b"))?,
    )?;
    let c_out = g.value(tb).len();
    let tb = g.reshape(tb, vec![c_out])?;
    h = g.add_channel_bias(h, tb)?;
    h = g.conv1d(
        h,
        p.var(&format!("{prefix}.conv2.w"))?,
        p.var(&format!("{prefix}.conv2.b"))?,
        1,
        1,
    )?;
    h = g.group_norm(
        h,
        groups,
        p.var(&format!("{prefix}.gn2.gamma"))?,
        p.var(&format!("{prefix}.gn2.beta"))?,
        eps,
    )?;
    h = g.silu(h);
    let shortcut = if p.has(&format!("{prefix}.skip.w")) {
        g.conv1d(
            x,
            p.var(&format!("{prefix}.skip.w"))?,
            p.var(&format!("{prefix}.skip.b"))?,
            1,
            0,
        )?
    } else {
        x
    };
    Ok(g.add(h, shortcut)?)
}

/// Predicts the noise in `xk` given diffusion step `k` and condition `m`.
///
/// `xk` is `[l, motion_channels]`, `m` is `[l, cond_channels]`; `l` must be
/// divisible by `2^depth`. Returns `[l, motion_channels]`.
pub fn denoise_with_options<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ELNetConfig,
    xk: Var,
    k: usize,
    m: Var,
    opts: DenoiseOptions,
) -> Result<Var> {
    cfg.validate()?;
    let xs = g.value(xk).shape().to_vec();
    let ms = g.value(m).shape().to_vec();
    if xs.len() != 2 || xs[1] != cfg.motion_channels {
        return Err(ModelError::invalid(format!(
            "expected motion [l, {}], got {xs:?}",
            cfg.motion_channels
        )));
    }
    if ms.len() != 2 || ms[1] != cfg.cond_channels {
        return Err(ModelError::invalid(format!(
            "expected condition [l, {}], got {ms:?}",
            cfg.cond_channels
        )));
    }
    if xs[0] != ms[0] {
        return Err(ModelError::invalid(format!(
            "motion has {} frames but condition has {}",
            xs[0], ms[0]
        )));
    }
    let l = xs[0];
    if l == 0 || l % (1 << cfg.depth) != 0 {
        return Err(ModelError::invalid(format!(
            "clip length {l} must be a positive multiple of {}",
            1 << cfg.depth
        )));
    }

    // Shared timestep embedding: sinusoids -> linear -> SiLU -> linear.
    let t_raw = timestep_embedding::<T>(k, cfg.time_embed_dim)?
        .reshape(vec![1, cfg.time_embed_dim])?;
    let t_raw = g.leaf(t_raw);
    let mut t_emb = g.linear(
        t_raw,
        p.var("elnet.time_mlp.0.w")?,
        p.var("elnet.time_mlp.0.b")?,
    )?;
    t_emb = g.silu(t_emb);
    t_emb = g.linear(
        t_emb,
        p.var("elnet.time_mlp.1.w")?,
        p.var("elnet.time_mlp.1.b")?,
    )?;

    // Channels-first input: concat motion and condition along channels.
    let xt = g.transpose(xk)?;
    let mt = g.transpose(m)?;
    let input = g.concat(&[xt, mt], 0)?;
    let mut h = g.conv1d(input, p.var("elnet.stem.w")?, p.var("elnet.stem.b")?, 1, 1)?;

    let mut skips = Vec::with_capacity(cfg.depth);
    for s in 0..cfg.depth {
        for r in 0..cfg.res_blocks {
            h = res_block(g, p, &format!("elnet.enc{s}.rb{r}"), h, t_emb, cfg.groups)?;
        }
        skips.push(h);
        h = g.conv1d(
            h,
            p.var(&format!("elnet.down{s}.w"))?,
            p.var(&format!("elnet.down{s}.b"))?,
            2,
            1,
        )?;
    }
    for r in 0..cfg.res_blocks {
        h = res_block(g, p, &format!("elnet.mid.rb{r}"), h, t_emb, cfg.groups)?;
    }
    for s in (0..cfg.depth).rev() {
        h = g.upsample_nearest_1d(h)?;
        h = g.conv1d(
            h,
            p.var(&format!("elnet.up{s}.w"))?,
            p.var(&format!("elnet.up{s}.b"))?,
            1,
            1,
        )?;
        let skip = if opts.use_skips {
            skips[s]
        } else {
            let shape = g.value(skips[s]).shape().to_vec();
            g.leaf(Tensor::zeros(shape))
        };
        h = g.concat(&[h, skip], 0)?;
        for r in 0..cfg.res_blocks {
            h = res_block(g, p, &format!("elnet.dec{s}.rb{r}"), h, t_emb, cfg.groups)?;
        }
    }
    h = g.group_norm(
        h,
        cfg.groups,
        p.var("elnet.final.gn.gamma")?,
        p.var("elnet.final.gn.beta")?,
        T::of(GN_EPS),
    )?;
    h = g.silu(h);
    h = g.conv1d(h, p.var("elnet.final.w")?, p.var("elnet.final.b")?, 1, 0)?;
    Ok(g.transpose(h)?)
}

/// [`denoise_with_options`] with default wiring.
pub fn denoise<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ELNetConfig,
    xk: Var,
    k: usize,
    m: Var,
) -> Result<Var> {
    denoise_with_options(g, p, cfg, xk, k, m, DenoiseOptions::default())
}

/// Analytic FLOP count of one denoiser pass at clip length `l`, counting each
/// multiply-add as two FLOPs for conv and linear layers (norms, activations,
/// and bias adds are excluded; they are sub-percent at these shapes).
pub fn denoiser_flops(cfg: &ELNetConfig, l: usize) -> u64 {
    let conv = |c_out: usize, c_in: usize, k: usize, l_out: usize| -> u64 {
        2 * (c_out * c_in * k * l_out) as u64
    };
    let linear = |out: usize, inp: usize| -> u64 { 2 * (out * inp) as u64 };
    let rb = |c_in: usize, c_out: usize, len: usize| -> u64 {
        let mut f = conv(c_out, c_in, 3, len) + conv(c_out, c_out, 3, len);
        f += linear(c_out, cfg.time_embed_dim);
        if c_in != c_out {
            f += conv(c_out, c_in, 1, len);
        }
        f
    };
    let d = cfg.time_embed_dim;
    let mut flops = 2 * linear(d, d);
    flops += conv(cfg.width(0), cfg.in_channels(), 3, l);
    let mut len = l;
    for s in 0..cfg.depth {
        for _ in 0..cfg.res_blocks {
            flops += rb(cfg.width(s), cfg.width(s), len);
        }
        len /= 2;
        flops += conv(cfg.width(s + 1), cfg.width(s), 3, len);
    }
    for _ in 0..cfg.res_blocks {
        flops += rb(cfg.width(cfg.depth), cfg.width(cfg.depth), len);
    }
    for s in (0..cfg.depth).rev() {
        len *= 2;
        flops += conv(cfg.width(s), cfg.width(s + 1), 3, len);
        for r in 0..cfg.res_blocks {
            let c_in = if r == 0 { 2 * cfg.width(s) } else { cfg.width(s) };
            flops += rb(c_in, cfg.width(s), len);
        }
    }
    flops += conv(cfg.motion_channels, cfg.width(0), 1, len);
    flops
}
