//! Reverse-mode autodiff over an append-only arena of tensor nodes.
//!
//! A [`Graph`] is built per forward pass: leaves hold inputs, params hold
//! trainable tensors, and every op appends a node whose parents have smaller
//! indices. That ordering makes the backward pass a single reverse sweep with
//! no explicit topological sort. Gradients accumulate additively, so shared
//! subexpressions and parameter reuse come out right.

use crate::error::{CoreError, Result};
use crate::ops;
use crate::ops::GroupNormStats;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T: Scalar> {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        cols: Tensor<T>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        stats: GroupNormStats<T>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Silu {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    SpatialSoftmax {
        x: Var,
        temperature: T,
        probs: Tensor<T>,
    },
    Upsample {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    AddChannelBias {
        x: Var,
        b: Var,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    StackRows {
        parts: Vec<Var>,
    },
    Transpose {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Mse {
        a: Var,
        b: Var,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation arena; see the module docs.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients never flow into it.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input; [`Graph::grad`] is populated for it after backward.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a param leaf; `None` until a backward sweep
    /// reaches it. Interior nodes never retain gradients.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros if the sweep never reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        match self.grads[v.0].as_ref() {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[v.0].value.shape().to_vec()),
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    // -- op constructors ----------------------------------------------------

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let y = ops::conv1d(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(
            y,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
            ng,
        ))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (y, cols) =
            ops::conv2d_with_cols(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(
            y,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
                cols,
            },
            ng,
        ))
    }

    pub fn group_norm(
        &mut self,
        x: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> Result<Var> {
        let (y, stats) = ops::group_norm(
            self.value(x),
            groups,
            self.value(gamma),
            self.value(beta),
            eps,
        )?;
        let ng = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            y,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            },
            ng,
        ))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), self.value(b))?;
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(y, Op::Linear { x, w, b }, ng))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let y = ops::silu(self.value(x));
        let ng = self.needs(&[x]);
        self.push(y, Op::Silu { x }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        let ng = self.needs(&[x]);
        self.push(y, Op::Relu { x }, ng)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y = ops::softmax(self.value(x), axis)?;
        let ng = self.needs(&[x]);
        Ok(self.push(y, Op::Softmax { x, axis }, ng))
    }

    pub fn spatial_softmax(&mut self, x: Var, temperature: T) -> Result<Var> {
        let (y, probs) = ops::spatial_softmax(self.value(x), temperature)?;
        let ng = self.needs(&[x]);
        Ok(self.push(
            y,
            Op::SpatialSoftmax {
                x,
                temperature,
                probs,
            },
            ng,
        ))
    }

    pub fn upsample_nearest_1d(&mut self, x: Var) -> Result<Var> {
        let y = ops::upsample_nearest_1d(self.value(x))?;
        let ng = self.needs(&[x]);
        Ok(self.push(y, Op::Upsample { x }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(y, Op::Add { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(y, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let y = self.value(x).scale(c);
        let ng = self.needs(&[x]);
        self.push(y, Op::Scale { x, c }, ng)
    }

    /// `x [C, ...] + b [C]`, the bias broadcast over trailing dims.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(b);
        if xv.rank() == 0 || bv.shape() != [xv.shape()[0]] {
            return Err(CoreError::shape(format!(
                "channel bias {:?} does not match input {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let spatial: usize = xv.shape()[1..].iter().product();
        let mut out = xv.data().to_vec();
        for c in 0..xv.shape()[0] {
            let bias = bv.data()[c];
            for v in &mut out[c * spatial..(c + 1) * spatial] {
                *v += bias;
            }
        }
        let y = Tensor::new(xv.shape().to_vec(), out)?;
        let ng = self.needs(&[x, b]);
        Ok(self.push(y, Op::AddChannelBias { x, b }, ng))
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::arg("concat of zero tensors"));
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(CoreError::arg(format!(
                "concat axis {axis} out of range for shape {first:?}"
            )));
        }
        let mut axis_total = 0usize;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(CoreError::shape(format!(
                    "concat of {:?} with {:?} along axis {axis}",
                    first, s
                )));
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;

        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total_run = axis_total * inner;
        let mut out = vec![T::zero(); outer * total_run];
        for o in 0..outer {
            let mut off = 0usize;
            for &p in parts {
                let pv = self.value(p);
                let run = pv.shape()[axis] * inner;
                out[o * total_run + off..o * total_run + off + run]
                    .copy_from_slice(&pv.data()[o * run..(o + 1) * run]);
                off += run;
            }
        }
        let y = Tensor::new(shape, out)?;
        let ng = self.needs(parts);
        Ok(self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Stack rank-1 tensors of equal length into `[N, D]`.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::arg("stack of zero tensors"));
        }
        let d = {
            let s = self.value(parts[0]).shape();
            if s.len() != 1 {
                return Err(CoreError::shape(format!("stack_rows expects rank-1, got {s:?}")));
            }
            s[0]
        };
        let mut out = vec![T::zero(); parts.len() * d];
        for (i, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            if pv.shape() != [d] {
                return Err(CoreError::shape(format!(
                    "stack_rows row {i} has shape {:?}, expected [{d}]",
                    pv.shape()
                )));
            }
            out[i * d..(i + 1) * d].copy_from_slice(pv.data());
        }
        let y = Tensor::new(vec![parts.len(), d], out)?;
        let ng = self.needs(parts);
        Ok(self.push(
            y,
            Op::StackRows {
                parts: parts.to_vec(),
            },
            ng,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).transposed()?;
        let ng = self.needs(&[x]);
        Ok(self.push(y, Op::Transpose { x }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let ng = self.needs(&[x]);
        Ok(self.push(y, Op::Reshape { x }, ng))
    }

    /// Scalar mean squared error between two same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::mse(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::scalar(v), Op::Mse { a, b }, ng))
    }

    // -- backward -----------------------------------------------------------

    /// Reverse sweep from a scalar `root`. Interior gradients live in a
    /// per-sweep buffer; only param-leaf gradients persist, accumulating
    /// additively across calls until [`Graph::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.rank() != 0 {
            return Err(CoreError::shape(format!(
                "backward root must be a scalar, got {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut sweep: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        sweep[root.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let (lower_grads, rest) = sweep.split_at_mut(i);
            let Some(go) = rest[0].as_ref() else {
                continue;
            };
            let nodes = &self.nodes;
            let needs = |v: Var| nodes[v.0].needs_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &nodes[i].op {
                Op::Leaf => {}
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let (gx, gw, gb) =
                        ops::conv1d_backward(val(*x), val(*w), go, *stride, *padding);
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], gx);
                    }
                    if needs(*w) {
                        accum(&mut lower_grads[w.0], gw);
                    }
                    if needs(*b) {
                        accum(&mut lower_grads[b.0], gb);
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                    cols,
                } => {
                    let (gx, gw, gb) =
                        ops::conv2d_backward(val(*x), val(*w), cols, go, *stride, *padding);
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], gx);
                    }
                    if needs(*w) {
                        accum(&mut lower_grads[w.0], gw);
                    }
                    if needs(*b) {
                        accum(&mut lower_grads[b.0], gb);
                    }
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    stats,
                } => {
                    let (gx, ggamma, gbeta) =
                        ops::group_norm_backward(val(*x), *groups, val(*gamma), stats, go);
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], gx);
                    }
                    if needs(*gamma) {
                        accum(&mut lower_grads[gamma.0], ggamma);
                    }
                    if needs(*beta) {
                        accum(&mut lower_grads[beta.0], gbeta);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = ops::linear_backward(val(*x), val(*w), go);
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], gx);
                    }
                    if needs(*w) {
                        accum(&mut lower_grads[w.0], gw);
                    }
                    if needs(*b) {
                        accum(&mut lower_grads[b.0], gb);
                    }
                }
                Op::Silu { x } => {
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], ops::silu_backward(val(*x), go));
                    }
                }
                Op::Relu { x } => {
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], ops::relu_backward(val(*x), go));
                    }
                }
                Op::Softmax { x, axis } => {
                    if needs(*x) {
                        accum(
                            &mut lower_grads[x.0],
                            ops::softmax_backward(&nodes[i].value, go, *axis),
                        );
                    }
                }
                Op::SpatialSoftmax {
                    x,
                    temperature,
                    probs,
                } => {
                    if needs(*x) {
                        accum(
                            &mut lower_grads[x.0],
                            ops::spatial_softmax_backward(probs, &nodes[i].value, go, *temperature),
                        );
                    }
                }
                Op::Upsample { x } => {
                    if needs(*x) {
                        accum(
                            &mut lower_grads[x.0],
                            ops::upsample_nearest_1d_backward(val(*x), go),
                        );
                    }
                }
                Op::Add { a, b } => {
                    if needs(*a) {
                        accum(&mut lower_grads[a.0], go.clone());
                    }
                    if needs(*b) {
                        accum(&mut lower_grads[b.0], go.clone());
                    }
                }
                Op::Mul { a, b } => {
                    if needs(*a) {
                        let g = go.zip_map(val(*b), |g, q| g * q).unwrap();
                        accum(&mut lower_grads[a.0], g);
                    }
                    if needs(*b) {
                        let g = go.zip_map(val(*a), |g, p| g * p).unwrap();
                        accum(&mut lower_grads[b.0], g);
                    }
                }
                Op::Scale { x, c } => {
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], go.scale(*c));
                    }
                }
                Op::AddChannelBias { x, b } => {
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], go.clone());
                    }
                    if needs(*b) {
                        let xv = val(*x);
                        let spatial: usize = xv.shape()[1..].iter().product();
                        let c = xv.shape()[0];
                        let mut gb = vec![T::zero(); c];
                        for (ch, gbv) in gb.iter_mut().enumerate() {
                            *gbv = go.data()[ch * spatial..(ch + 1) * spatial]
                                .iter()
                                .fold(T::zero(), |acc, &g| acc + g);
                        }
                        accum(&mut lower_grads[b.0], Tensor::new(vec![c], gb).unwrap());
                    }
                }
                Op::Concat { parts, axis } => {
                    let shape = nodes[i].value.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let total_run = shape[*axis] * inner;
                    let mut off = 0usize;
                    for &p in parts {
                        let pv = val(p);
                        let run = pv.shape()[*axis] * inner;
                        if needs(p) {
                            let mut g = vec![T::zero(); pv.len()];
                            for o in 0..outer {
                                g[o * run..(o + 1) * run].copy_from_slice(
                                    &go.data()[o * total_run + off..o * total_run + off + run],
                                );
                            }
                            accum(
                                &mut lower_grads[p.0],
                                Tensor::new(pv.shape().to_vec(), g).unwrap(),
                            );
                        }
                        off += run;
                    }
                }
                Op::StackRows { parts } => {
                    let d = nodes[i].value.shape()[1];
                    for (r, &p) in parts.iter().enumerate() {
                        if needs(p) {
                            let g = go.data()[r * d..(r + 1) * d].to_vec();
                            accum(&mut lower_grads[p.0], Tensor::new(vec![d], g).unwrap());
                        }
                    }
                }
                Op::Transpose { x } => {
                    if needs(*x) {
                        accum(&mut lower_grads[x.0], go.transposed().unwrap());
                    }
                }
                Op::Reshape { x } => {
                    if needs(*x) {
                        let g = go
                            .clone()
                            .reshape(val(*x).shape().to_vec())
                            .unwrap();
                        accum(&mut lower_grads[x.0], g);
                    }
                }
                Op::Mse { a, b } => {
                    let av = val(*a);
                    let bv = val(*b);
                    let g = go.item();
                    let coef = T::of(2.0) / T::of(av.len() as f64) * g;
                    if needs(*a) {
                        let ga = av.zip_map(bv, |p, q| coef * (p - q)).unwrap();
                        accum(&mut lower_grads[a.0], ga);
                    }
                    if needs(*b) {
                        let gb = av.zip_map(bv, |p, q| -coef * (p - q)).unwrap();
                        accum(&mut lower_grads[b.0], gb);
                    }
                }
            }
        }

        for (i, g) in sweep.into_iter().enumerate() {
            if let (Some(g), Op::Leaf) = (g, &self.nodes[i].op) {
                if self.nodes[i].needs_grad {
                    accum(&mut self.grads[i], g);
                }
            }
        }
        Ok(())
    }
}

fn accum<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}
