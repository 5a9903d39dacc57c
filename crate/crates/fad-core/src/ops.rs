//! Forward and backward kernels for the op set used by the encoders and the
//! denoiser.
//!
//! Every function here is a pure tensor-in/tensor-out computation; the graph
//! in [`crate::graph`] wires them into reverse-mode autodiff. Conv2d runs as
//! im2col plus GEMM, conv1d as direct loops (its operands are tiny), and the
//! rest are straightforward elementwise or reduction kernels.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `c[m,n] += alpha * a[m,k] * b[k,n]` on row-major slices with explicit
/// strides. `beta` scales the existing contents of `c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    rsa: isize,
    csa: isize,
    b: &[T],
    rsb: isize,
    csb: isize,
    beta: T,
    c: &mut [T],
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_index = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        ((rows as isize - 1) * rs + (cols as isize - 1) * cs) as usize
    };
    assert!(a.len() > max_index(m, k, rsa, csa), "gemm: A too short");
    assert!(b.len() > max_index(k, n, rsb, csb), "gemm: B too short");
    assert!(c.len() >= m * n, "gemm: C too short");
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride < 1 {
        return Err(CoreError::arg("stride must be >= 1"));
    }
    let padded = len + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(CoreError::arg(format!(
            "kernel {kernel} does not fit input of padded length {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

fn check_conv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 2 || w.rank() != 3 || b.rank() != 1 {
        return Err(CoreError::shape(format!(
            "conv1d expects x [C_in, L], w [C_out, C_in, k], b [C_out]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (c_in, len) = (x.shape()[0], x.shape()[1]);
    let (c_out, w_cin, kernel) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if w_cin != c_in || b.shape()[0] != c_out {
        return Err(CoreError::shape(format!(
            "conv1d channel mismatch: x has {} in-channels, w is {:?}, b is {:?}",
            c_in,
            w.shape(),
            b.shape()
        )));
    }
    Ok((c_in, len, c_out, kernel))
}

/// 1-D cross-correlation over `[C_in, L]` with weight `[C_out, C_in, k]`.
pub fn conv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (c_in, len, c_out, kernel) = check_conv1d(x, w, b)?;
    let l_out = conv_out_len(len, kernel, stride, padding)?;

    let padded = len + 2 * padding;
    let mut xpad = vec![T::zero(); c_in * padded];
    for ci in 0..c_in {
        xpad[ci * padded + padding..ci * padded + padding + len]
            .copy_from_slice(&x.data()[ci * len..(ci + 1) * len]);
    }

    let mut out = vec![T::zero(); c_out * l_out];
    for co in 0..c_out {
        let orow = &mut out[co * l_out..(co + 1) * l_out];
        orow.iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..c_in {
            let xrow = &xpad[ci * padded..(ci + 1) * padded];
            for t in 0..kernel {
                let wv = w.data()[(co * c_in + ci) * kernel + t];
                for (lo, o) in orow.iter_mut().enumerate() {
                    *o += wv * xrow[lo * stride + t];
                }
            }
        }
    }
    Tensor::new(vec![c_out, l_out], out)
}

/// Gradients of [`conv1d`] with respect to input, weight, and bias.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (c_in, len) = (x.shape()[0], x.shape()[1]);
    let (c_out, _, kernel) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let l_out = grad_out.shape()[1];
    let padded = len + 2 * padding;

    let mut xpad = vec![T::zero(); c_in * padded];
    for ci in 0..c_in {
        xpad[ci * padded + padding..ci * padded + padding + len]
            .copy_from_slice(&x.data()[ci * len..(ci + 1) * len]);
    }

    let mut gxpad = vec![T::zero(); c_in * padded];
    let mut gw = vec![T::zero(); c_out * c_in * kernel];
    let mut gb = vec![T::zero(); c_out];

    for co in 0..c_out {
        let gorow = &grad_out.data()[co * l_out..(co + 1) * l_out];
        gb[co] = gorow.iter().fold(T::zero(), |a, &g| a + g);
        for ci in 0..c_in {
            let xrow = &xpad[ci * padded..(ci + 1) * padded];
            let gxrow = &mut gxpad[ci * padded..(ci + 1) * padded];
            for t in 0..kernel {
                let wv = w.data()[(co * c_in + ci) * kernel + t];
                let mut acc = T::zero();
                for (lo, &g) in gorow.iter().enumerate() {
                    acc += g * xrow[lo * stride + t];
                    gxrow[lo * stride + t] += wv * g;
                }
                gw[(co * c_in + ci) * kernel + t] += acc;
            }
        }
    }

    let mut gx = vec![T::zero(); c_in * len];
    for ci in 0..c_in {
        gx[ci * len..(ci + 1) * len]
            .copy_from_slice(&gxpad[ci * padded + padding..ci * padded + padding + len]);
    }
    (
        Tensor::new(vec![c_in, len], gx).unwrap(),
        Tensor::new(w.shape().to_vec(), gw).unwrap(),
        Tensor::new(vec![c_out], gb).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

fn check_conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if x.rank() != 3 || w.rank() != 4 || b.rank() != 1 {
        return Err(CoreError::shape(format!(
            "conv2d expects x [C_in, H, W], w [C_out, C_in, kh, kw], b [C_out]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, w_cin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if w_cin != c_in || b.shape()[0] != c_out {
        return Err(CoreError::shape(format!(
            "conv2d channel mismatch: x has {} in-channels, w is {:?}, b is {:?}",
            c_in,
            w.shape(),
            b.shape()
        )));
    }
    Ok((c_in, h, wd, c_out, kh, kw))
}

/// Unrolled patches: `[C_in*kh*kw, H_out*W_out]`.
pub fn im2col<T: Scalar>(
    x: &Tensor<T>,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) -> Tensor<T> {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cols_w = h_out * w_out;
    let mut cols = vec![T::zero(); c_in * kh * kw * cols_w];
    for ci in 0..c_in {
        let plane = &x.data()[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut cols[((ci * kh + ky) * kw + kx) * cols_w
                    ..((ci * kh + ky) * kw + kx + 1) * cols_w];
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            row[oy * w_out + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_in * kh * kw, cols_w], cols).unwrap()
}

fn col2im<T: Scalar>(
    g_cols: &Tensor<T>,
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) -> Tensor<T> {
    let cols_w = h_out * w_out;
    let mut gx = vec![T::zero(); c_in * h * w];
    for ci in 0..c_in {
        let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &g_cols.data()[((ci * kh + ky) * kw + kx) * cols_w
                    ..((ci * kh + ky) * kw + kx + 1) * cols_w];
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += row[oy * w_out + ox];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_in, h, w], gx).unwrap()
}

fn conv2d_direct<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) -> Tensor<T> {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let hw = h_out * w_out;
    let mut out = vec![T::zero(); c_out * hw];
    // Accumulation order per output cell is ascending (ci, ky, kx); the
    // explicit-loop oracle in the tests sums in the same order, which is what
    // makes bit-for-bit comparison possible.
    for co in 0..c_out {
        let plane = &mut out[co * hw..(co + 1) * hw];
        plane.iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..c_in {
            let xplane = &x.data()[ci * h * wd..(ci + 1) * h * wd];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w.data()[((co * c_in + ci) * kh + ky) * kw + kx];
                    for oy in 0..h_out {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &xplane[iy as usize * wd..(iy as usize + 1) * wd];
                        for ox in 0..w_out {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix >= 0 && ix < wd as isize {
                                plane[oy * w_out + ox] += wv * src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, h_out, w_out], out).unwrap()
}

/// 2-D cross-correlation over `[C_in, H, W]`; returns the output and the
/// im2col buffer, which the backward pass reuses. The forward routes through
/// GEMM or plain loops per [`Scalar::CONV_VIA_GEMM`].
pub fn conv2d_with_cols<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c_in, h, wd, c_out, kh, kw) = check_conv2d(x, w, b)?;
    let h_out = conv_out_len(h, kh, stride, padding)?;
    let w_out = conv_out_len(wd, kw, stride, padding)?;

    let cols = im2col(x, kh, kw, stride, padding, h_out, w_out);
    if !T::CONV_VIA_GEMM {
        let out = conv2d_direct(x, w, b, stride, padding, h_out, w_out);
        return Ok((out, cols));
    }

    let ckk = c_in * kh * kw;
    let hw = h_out * w_out;
    let mut out = vec![T::zero(); c_out * hw];
    for co in 0..c_out {
        out[co * hw..(co + 1) * hw]
            .iter_mut()
            .for_each(|v| *v = b.data()[co]);
    }
    gemm(
        c_out,
        ckk,
        hw,
        T::one(),
        w.data(),
        ckk as isize,
        1,
        cols.data(),
        hw as isize,
        1,
        T::one(),
        &mut out,
    );
    Ok((Tensor::new(vec![c_out, h_out, w_out], out)?, cols))
}

pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    conv2d_with_cols(x, w, b, stride, padding).map(|(out, _)| out)
}

/// Gradients of [`conv2d`]; `cols` is the buffer returned by the forward.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    cols: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (h_out, w_out) = (grad_out.shape()[1], grad_out.shape()[2]);
    let ckk = c_in * kh * kw;
    let hw = h_out * w_out;

    // gw[co, ckk] = grad_out[co, hw] * cols^T[hw, ckk]
    let mut gw = vec![T::zero(); c_out * ckk];
    gemm(
        c_out,
        hw,
        ckk,
        T::one(),
        grad_out.data(),
        hw as isize,
        1,
        cols.data(),
        1,
        hw as isize,
        T::zero(),
        &mut gw,
    );

    // g_cols[ckk, hw] = w^T[ckk, co] * grad_out[co, hw]
    let mut g_cols = vec![T::zero(); ckk * hw];
    gemm(
        ckk,
        c_out,
        hw,
        T::one(),
        w.data(),
        1,
        ckk as isize,
        grad_out.data(),
        hw as isize,
        1,
        T::zero(),
        &mut g_cols,
    );
    let g_cols = Tensor::new(vec![ckk, hw], g_cols).unwrap();
    let gx = col2im(&g_cols, c_in, h, wd, kh, kw, stride, padding, h_out, w_out);

    let mut gb = vec![T::zero(); c_out];
    for co in 0..c_out {
        gb[co] = grad_out.data()[co * hw..(co + 1) * hw]
            .iter()
            .fold(T::zero(), |a, &g| a + g);
    }
    (
        gx,
        Tensor::new(w.shape().to_vec(), gw).unwrap(),
        Tensor::new(vec![c_out], gb).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// group norm
// ---------------------------------------------------------------------------

/// Per-group mean and reciprocal standard deviation saved by the forward.
#[derive(Clone, Debug)]
pub struct GroupNormStats<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// GroupNorm over `[C, ...]`: normalize each group of channels to mean 0 and
/// variance 1 (biased), then apply the per-channel affine `gamma`, `beta`.
pub fn group_norm<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, GroupNormStats<T>)> {
    if x.rank() == 0 {
        return Err(CoreError::shape("group_norm expects rank >= 1"));
    }
    let c = x.shape()[0];
    if groups == 0 || c % groups != 0 {
        return Err(CoreError::arg(format!(
            "channel count {c} not divisible by groups {groups}"
        )));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(CoreError::shape(format!(
            "gamma/beta must be [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    if eps <= T::zero() {
        return Err(CoreError::arg("eps must be > 0"));
    }
    let spatial: usize = x.shape()[1..].iter().product();
    let ch_per_group = c / groups;
    let m = T::of((ch_per_group * spatial) as f64);

    let mut out = vec![T::zero(); x.len()];
    let mut stats = GroupNormStats {
        mean: vec![T::zero(); groups],
        inv_std: vec![T::zero(); groups],
    };
    for g in 0..groups {
        let lo = g * ch_per_group * spatial;
        let hi = (g + 1) * ch_per_group * spatial;
        let slab = &x.data()[lo..hi];
        let mean = slab.iter().fold(T::zero(), |a, &v| a + v) / m;
        let var = slab
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            / m;
        let inv_std = (var + eps).sqrt().recip();
        stats.mean[g] = mean;
        stats.inv_std[g] = inv_std;
        for cc in 0..ch_per_group {
            let ch = g * ch_per_group + cc;
            let (ga, be) = (gamma.data()[ch], beta.data()[ch]);
            for s in 0..spatial {
                let idx = ch * spatial + s;
                out[idx] = ga * (x.data()[idx] - mean) * inv_std + be;
            }
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, stats))
}

/// Gradients of [`group_norm`] with respect to input, gamma, and beta.
pub fn group_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    stats: &GroupNormStats<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = x.shape()[0];
    let spatial: usize = x.shape()[1..].iter().product();
    let ch_per_group = c / groups;
    let m = T::of((ch_per_group * spatial) as f64);

    let mut gx = vec![T::zero(); x.len()];
    let mut ggamma = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];

    for g in 0..groups {
        let mean = stats.mean[g];
        let inv_std = stats.inv_std[g];
        // First pass: per-channel reductions plus the two group means that the
        // normalization backward needs.
        let mut sum_gxhat = T::zero();
        let mut sum_gxhat_xhat = T::zero();
        for cc in 0..ch_per_group {
            let ch = g * ch_per_group + cc;
            let ga = gamma.data()[ch];
            for s in 0..spatial {
                let idx = ch * spatial + s;
                let xhat = (x.data()[idx] - mean) * inv_std;
                let go = grad_out.data()[idx];
                gbeta[ch] += go;
                ggamma[ch] += go * xhat;
                let gxhat = go * ga;
                sum_gxhat += gxhat;
                sum_gxhat_xhat += gxhat * xhat;
            }
        }
        let mean_gxhat = sum_gxhat / m;
        let mean_gxhat_xhat = sum_gxhat_xhat / m;
        for cc in 0..ch_per_group {
            let ch = g * ch_per_group + cc;
            let ga = gamma.data()[ch];
            for s in 0..spatial {
                let idx = ch * spatial + s;
                let xhat = (x.data()[idx] - mean) * inv_std;
                let gxhat = grad_out.data()[idx] * ga;
                gx[idx] = inv_std * (gxhat - mean_gxhat - xhat * mean_gxhat_xhat);
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).unwrap(),
        Tensor::new(vec![c], ggamma).unwrap(),
        Tensor::new(vec![c], gbeta).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// activations, linear, softmax
// ---------------------------------------------------------------------------

fn sigmoid<T: Scalar>(x: T) -> T {
    (T::one() + (-x).exp()).recip()
}

pub fn silu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

pub fn silu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip_map(grad_out, |v, g| {
        let s = sigmoid(v);
        g * s * (T::one() + v * (T::one() - s))
    })
    .expect("silu backward shape")
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
        .expect("relu backward shape")
}

/// Dense layer `y = x * w^T + b` with `x [N, in]`, `w [out, in]`, `b [out]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 || w.rank() != 2 || b.rank() != 1 {
        return Err(CoreError::shape(format!(
            "linear expects x [N, in], w [out, in], b [out]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let (d_out, w_in) = (w.shape()[0], w.shape()[1]);
    if w_in != d_in || b.shape()[0] != d_out {
        return Err(CoreError::shape(format!(
            "linear dims mismatch: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = vec![T::zero(); n * d_out];
    for row in 0..n {
        out[row * d_out..(row + 1) * d_out].copy_from_slice(b.data());
    }
    // x [n, in] * w^T [in, out]
    gemm(
        n,
        d_in,
        d_out,
        T::one(),
        x.data(),
        d_in as isize,
        1,
        w.data(),
        1,
        d_in as isize,
        T::one(),
        &mut out,
    );
    Tensor::new(vec![n, d_out], out)
}

pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = w.shape()[0];

    // gx [n, in] = go [n, out] * w [out, in]
    let mut gx = vec![T::zero(); n * d_in];
    gemm(
        n,
        d_out,
        d_in,
        T::one(),
        grad_out.data(),
        d_out as isize,
        1,
        w.data(),
        d_in as isize,
        1,
        T::zero(),
        &mut gx,
    );
    // gw [out, in] = go^T [out, n] * x [n, in]
    let mut gw = vec![T::zero(); d_out * d_in];
    gemm(
        d_out,
        n,
        d_in,
        T::one(),
        grad_out.data(),
        1,
        d_out as isize,
        x.data(),
        d_in as isize,
        1,
        T::zero(),
        &mut gw,
    );
    let mut gb = vec![T::zero(); d_out];
    for row in 0..n {
        for (o, gbv) in gb.iter_mut().enumerate() {
            *gbv += grad_out.data()[row * d_out + o];
        }
    }
    (
        Tensor::new(vec![n, d_in], gx).unwrap(),
        Tensor::new(vec![d_out, d_in], gw).unwrap(),
        Tensor::new(vec![d_out], gb).unwrap(),
    )
}

/// Softmax along `axis`; rows of the axis sum to 1.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(CoreError::arg(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    x.ensure_finite("softmax input")?;
    let a = x.shape()[axis];
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * a * inner + i;
            let mut mx = T::neg_infinity();
            for j in 0..a {
                mx = mx.max(x.data()[base + j * inner]);
            }
            let mut z = T::zero();
            for j in 0..a {
                let e = (x.data()[base + j * inner] - mx).exp();
                out[base + j * inner] = e;
                z += e;
            }
            for j in 0..a {
                out[base + j * inner] /= z;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Backward of [`softmax`] given the forward output `p`.
pub fn softmax_backward<T: Scalar>(p: &Tensor<T>, grad_out: &Tensor<T>, axis: usize) -> Tensor<T> {
    let a = p.shape()[axis];
    let outer: usize = p.shape()[..axis].iter().product();
    let inner: usize = p.shape()[axis + 1..].iter().product();
    let mut gx = vec![T::zero(); p.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * a * inner + i;
            let mut dot = T::zero();
            for j in 0..a {
                dot += grad_out.data()[base + j * inner] * p.data()[base + j * inner];
            }
            for j in 0..a {
                let idx = base + j * inner;
                gx[idx] = p.data()[idx] * (grad_out.data()[idx] - dot);
            }
        }
    }
    Tensor::new(p.shape().to_vec(), gx).unwrap()
}

// ---------------------------------------------------------------------------
// spatial softmax
// ---------------------------------------------------------------------------

/// Normalized cell-center coordinate of index `i` among `n` cells, in
/// `(-1, 1)`.
pub fn cell_center(i: usize, n: usize) -> f64 {
    2.0 * (i as f64 + 0.5) / n as f64 - 1.0
}

/// Per-channel softmax over all spatial cells followed by the expected
/// (x, y) cell-center coordinate; output `[2C]` with the pair `(x, y)` per
/// channel.
pub fn spatial_softmax<T: Scalar>(
    x: &Tensor<T>,
    temperature: T,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if x.rank() != 3 {
        return Err(CoreError::shape(format!(
            "spatial_softmax expects [C, H, W], got {:?}",
            x.shape()
        )));
    }
    if temperature <= T::zero() {
        return Err(CoreError::arg("temperature must be > 0"));
    }
    x.ensure_finite("spatial_softmax input")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let hw = h * w;
    let mut probs = vec![T::zero(); c * hw];
    let mut out = vec![T::zero(); 2 * c];
    for ch in 0..c {
        let plane = &x.data()[ch * hw..(ch + 1) * hw];
        let mut mx = T::neg_infinity();
        for &v in plane {
            mx = mx.max(v);
        }
        let mut z = T::zero();
        for (i, &v) in plane.iter().enumerate() {
            let e = ((v - mx) / temperature).exp();
            probs[ch * hw + i] = e;
            z += e;
        }
        let mut ex = T::zero();
        let mut ey = T::zero();
        for iy in 0..h {
            for ix in 0..w {
                let p = probs[ch * hw + iy * w + ix] / z;
                probs[ch * hw + iy * w + ix] = p;
                ex += p * T::of(cell_center(ix, w));
                ey += p * T::of(cell_center(iy, h));
            }
        }
        out[2 * ch] = ex;
        out[2 * ch + 1] = ey;
    }
    Ok((
        Tensor::new(vec![2 * c], out)?,
        Tensor::new(vec![c, h, w], probs)?,
    ))
}

/// Backward of [`spatial_softmax`] given the saved probabilities and the
/// forward output.
pub fn spatial_softmax_backward<T: Scalar>(
    probs: &Tensor<T>,
    out: &Tensor<T>,
    grad_out: &Tensor<T>,
    temperature: T,
) -> Tensor<T> {
    let (c, h, w) = (probs.shape()[0], probs.shape()[1], probs.shape()[2]);
    let hw = h * w;
    let mut gx = vec![T::zero(); c * hw];
    for ch in 0..c {
        let (gox, goy) = (grad_out.data()[2 * ch], grad_out.data()[2 * ch + 1]);
        let (mx, my) = (out.data()[2 * ch], out.data()[2 * ch + 1]);
        for iy in 0..h {
            for ix in 0..w {
                let p = probs.data()[ch * hw + iy * w + ix];
                let dx = T::of(cell_center(ix, w)) - mx;
                let dy = T::of(cell_center(iy, h)) - my;
                gx[ch * hw + iy * w + ix] = p / temperature * (gox * dx + goy * dy);
            }
        }
    }
    Tensor::new(vec![c, h, w], gx).unwrap()
}

// ---------------------------------------------------------------------------
// resampling, loss
// ---------------------------------------------------------------------------

/// Nearest-neighbor 2x upsampling of `[C, L]` to `[C, 2L]`.
pub fn upsample_nearest_1d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(CoreError::shape(format!(
            "upsample expects [C, L], got {:?}",
            x.shape()
        )));
    }
    let (c, l) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![T::zero(); c * 2 * l];
    for ch in 0..c {
        for i in 0..l {
            let v = x.data()[ch * l + i];
            out[ch * 2 * l + 2 * i] = v;
            out[ch * 2 * l + 2 * i + 1] = v;
        }
    }
    Tensor::new(vec![c, 2 * l], out)
}

pub fn upsample_nearest_1d_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, l) = (x.shape()[0], x.shape()[1]);
    let mut gx = vec![T::zero(); c * l];
    for ch in 0..c {
        for i in 0..l {
            gx[ch * l + i] =
                grad_out.data()[ch * 2 * l + 2 * i] + grad_out.data()[ch * 2 * l + 2 * i + 1];
        }
    }
    Tensor::new(vec![c, l], gx).unwrap()
}

/// Mean squared error over all elements.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(CoreError::shape(format!(
            "mse on {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = T::of(a.len() as f64);
    let s = a
        .data()
        .iter()
        .zip(b.data())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok(s / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t<T: Scalar>(shape: &[usize], data: &[T]) -> Tensor<T> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv1d_identity_kernel_passes_input_through() {
        let x = t(&[1, 5], &[1.0f64, -2.0, 3.0, 0.5, 4.0]);
        let w = t(&[1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv1d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv1d_hand_case() {
        // [1,2,3] * [1,1] -> [3,5]
        let x = t(&[1, 3], &[1.0f64, 2.0, 3.0]);
        let w = t(&[1, 1, 2], &[1.0, 1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv1d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn conv1d_same_padding_keeps_length() {
        let x = Tensor::<f32>::zeros(vec![2, 8]);
        let w = Tensor::<f32>::zeros(vec![3, 2, 3]);
        let b = Tensor::<f32>::zeros(vec![3]);
        let y = conv1d(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.shape(), &[3, 8]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let x = t(&[1, 3, 3], &[1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv2d_constant_image_under_averaging_kernel() {
        let x = Tensor::<f64>::filled(vec![1, 5, 5], 3.0);
        let w = Tensor::<f64>::filled(vec![1, 1, 3, 3], 1.0 / 9.0);
        let b = Tensor::<f64>::zeros(vec![1]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for &v in y.data() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn group_norm_constant_input_gives_zeros() {
        let x = Tensor::<f64>::filled(vec![4, 6], 7.0);
        let gamma = Tensor::<f64>::filled(vec![4], 1.0);
        let beta = Tensor::<f64>::zeros(vec![4]);
        let (y, _) = group_norm(&x, 2, &gamma, &beta, 1e-5).unwrap();
        for &v in y.data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn group_norm_zero_gamma_broadcasts_beta() {
        let mut rngish = 0.3f64;
        let x = Tensor::<f64>::zeros(vec![4, 3]).map(|_| {
            rngish = (rngish * 997.0).fract();
            rngish
        });
        let gamma = Tensor::<f64>::zeros(vec![4]);
        let beta = t(&[4], &[1.0f64, -2.0, 0.5, 3.0]);
        let (y, _) = group_norm(&x, 4, &gamma, &beta, 1e-5).unwrap();
        for c in 0..4 {
            for s in 0..3 {
                assert_eq!(y.at(&[c, s]), beta.data()[c]);
            }
        }
    }

    #[test]
    fn group_norm_rejects_indivisible_groups() {
        let x = Tensor::<f32>::zeros(vec![6, 2]);
        let gamma = Tensor::<f32>::filled(vec![6], 1.0);
        let beta = Tensor::<f32>::zeros(vec![6]);
        assert!(group_norm(&x, 4, &gamma, &beta, 1e-5).is_err());
    }

    #[test]
    fn softmax_uniform_vector() {
        let x = Tensor::<f64>::filled(vec![5], 2.3);
        let p = softmax(&x, 0).unwrap();
        for &v in p.data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_cases() {
        let x = t(&[2], &[0.0f64, 0.0]);
        let y = t(&[2], &[1.0f64, 1.0]);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn spatial_softmax_uniform_map_is_centered() {
        let x = Tensor::<f64>::filled(vec![3, 4, 5], 1.7);
        let (out, _) = spatial_softmax(&x, 1.0).unwrap();
        assert_eq!(out.shape(), &[6]);
        for &v in out.data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn spatial_softmax_peak_localizes() {
        let mut x = Tensor::<f64>::zeros(vec![1, 7, 9]);
        x.set(&[0, 2, 6], 80.0);
        let (out, _) = spatial_softmax(&x, 1.0).unwrap();
        assert!((out.data()[0] - cell_center(6, 9)).abs() < 1e-3);
        assert!((out.data()[1] - cell_center(2, 7)).abs() < 1e-3);
    }

    #[test]
    fn upsample_doubles_and_repeats() {
        let x = t(&[1, 3], &[1.0f64, 2.0, 3.0]);
        let y = upsample_nearest_1d(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }
}
