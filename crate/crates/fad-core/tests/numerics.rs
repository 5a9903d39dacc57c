//! Oracle verification of the numerical core: finite-difference gradient
//! checks for every differentiable op (64-bit, many seeds) and bit-for-bit
//! agreement of the convolution forwards with explicit summation loops.

use fad_core::graph::{Graph, Var};
use fad_core::ops;
use fad_core::tensor::Tensor;
use fad_core::{grad_check, Result};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs a gradient check for one op wiring across all seeds.
fn check_over_seeds<F>(name: &str, mut case: F)
where
    F: FnMut(&mut ChaCha8Rng) -> Result<f64>,
{
    for seed in 0..SEEDS {
        let mut r = rng(0x5eed_0000 + seed);
        let err = case(&mut r).unwrap_or_else(|e| panic!("{name} (seed {seed}): {e}"));
        assert!(err < TOL, "{name} (seed {seed}): rel error {err}");
    }
}

/// mse against a fixed target turns any op output into a scalar loss.
fn to_loss(g: &mut Graph<f64>, y: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let target = g.leaf(Tensor::randn(g.value(y).shape().to_vec(), rng));
    g.mse(y, target)
}

#[test]
fn conv1d_gradients() {
    for &(stride, padding) in &[(1usize, 1usize), (2, 0)] {
        check_over_seeds("conv1d/x", |r| {
            let x = Tensor::randn(vec![3, 10], r);
            let w = Tensor::randn(vec![4, 3, 3], r).scale(0.5);
            let b = Tensor::randn(vec![4], r);
            grad_check(
                |g, v| {
                    let w = g.leaf(w.clone());
                    let b = g.leaf(b.clone());
                    let y = g.conv1d(v, w, b, stride, padding)?;
                    to_loss(g, y, &mut rng(1))
                },
                &x,
                1e-4,
            )
        });
        check_over_seeds("conv1d/w", |r| {
            let x = Tensor::randn(vec![3, 10], r);
            let w = Tensor::randn(vec![4, 3, 3], r).scale(0.5);
            let b = Tensor::randn(vec![4], r);
            grad_check(
                |g, v| {
                    let x = g.leaf(x.clone());
                    let b = g.leaf(b.clone());
                    let y = g.conv1d(x, v, b, stride, padding)?;
                    to_loss(g, y, &mut rng(2))
                },
                &w,
                1e-4,
            )
        });
        check_over_seeds("conv1d/b", |r| {
            let x = Tensor::randn(vec![3, 10], r);
            let w = Tensor::randn(vec![4, 3, 3], r).scale(0.5);
            let b = Tensor::randn(vec![4], r);
            grad_check(
                |g, v| {
                    let x = g.leaf(x.clone());
                    let w = g.leaf(w.clone());
                    let y = g.conv1d(x, w, v, stride, padding)?;
                    to_loss(g, y, &mut rng(3))
                },
                &b,
                1e-4,
            )
        });
    }
}

#[test]
fn conv2d_gradients() {
    check_over_seeds("conv2d/x", |r| {
        let x = Tensor::randn(vec![2, 6, 6], r);
        let w = Tensor::randn(vec![3, 2, 3, 3], r).scale(0.4);
        let b = Tensor::randn(vec![3], r);
        grad_check(
            |g, v| {
                let w = g.leaf(w.clone());
                let b = g.leaf(b.clone());
                let y = g.conv2d(v, w, b, 2, 1)?;
                to_loss(g, y, &mut rng(4))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("conv2d/w", |r| {
        let x = Tensor::randn(vec![2, 6, 6], r);
        let w = Tensor::randn(vec![3, 2, 3, 3], r).scale(0.4);
        let b = Tensor::randn(vec![3], r);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let b = g.leaf(b.clone());
                let y = g.conv2d(x, v, b, 2, 1)?;
                to_loss(g, y, &mut rng(5))
            },
            &w,
            1e-4,
        )
    });
    check_over_seeds("conv2d/b", |r| {
        let x = Tensor::randn(vec![2, 6, 6], r);
        let w = Tensor::randn(vec![3, 2, 3, 3], r).scale(0.4);
        let b = Tensor::randn(vec![3], r);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let w = g.leaf(w.clone());
                let y = g.conv2d(x, w, v, 1, 0)?;
                to_loss(g, y, &mut rng(6))
            },
            &b,
            1e-4,
        )
    });
}

#[test]
fn group_norm_gradients() {
    check_over_seeds("group_norm/x", |r| {
        let x = Tensor::randn(vec![8, 6], r);
        let gamma = Tensor::randn(vec![8], r).map(|v| 1.0 + 0.3 * v);
        let beta = Tensor::randn(vec![8], r).scale(0.2);
        grad_check(
            |g, v| {
                let gamma = g.leaf(gamma.clone());
                let beta = g.leaf(beta.clone());
                let y = g.group_norm(v, 4, gamma, beta, 1e-5)?;
                to_loss(g, y, &mut rng(7))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("group_norm/gamma", |r| {
        let x = Tensor::randn(vec![8, 6], r);
        let gamma = Tensor::randn(vec![8], r).map(|v| 1.0 + 0.3 * v);
        let beta = Tensor::randn(vec![8], r).scale(0.2);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let beta = g.leaf(beta.clone());
                let y = g.group_norm(x, 4, v, beta, 1e-5)?;
                to_loss(g, y, &mut rng(8))
            },
            &gamma,
            1e-4,
        )
    });
    check_over_seeds("group_norm/beta", |r| {
        let x = Tensor::randn(vec![8, 6], r);
        let gamma = Tensor::randn(vec![8], r).map(|v| 1.0 + 0.3 * v);
        let beta = Tensor::randn(vec![8], r).scale(0.2);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let gamma = g.leaf(gamma.clone());
                let y = g.group_norm(x, 4, gamma, v, 1e-5)?;
                to_loss(g, y, &mut rng(9))
            },
            &beta,
            1e-4,
        )
    });
}

#[test]
fn linear_gradients() {
    check_over_seeds("linear/x", |r| {
        let x = Tensor::randn(vec![3, 5], r);
        let w = Tensor::randn(vec![4, 5], r).scale(0.5);
        let b = Tensor::randn(vec![4], r);
        grad_check(
            |g, v| {
                let w = g.leaf(w.clone());
                let b = g.leaf(b.clone());
                let y = g.linear(v, w, b)?;
                to_loss(g, y, &mut rng(10))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("linear/w", |r| {
        let x = Tensor::randn(vec![3, 5], r);
        let w = Tensor::randn(vec![4, 5], r).scale(0.5);
        let b = Tensor::randn(vec![4], r);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let b = g.leaf(b.clone());
                let y = g.linear(x, v, b)?;
                to_loss(g, y, &mut rng(11))
            },
            &w,
            1e-4,
        )
    });
    check_over_seeds("linear/b", |r| {
        let x = Tensor::randn(vec![3, 5], r);
        let w = Tensor::randn(vec![4, 5], r).scale(0.5);
        let b = Tensor::randn(vec![4], r);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let w = g.leaf(w.clone());
                let y = g.linear(x, w, v)?;
                to_loss(g, y, &mut rng(12))
            },
            &b,
            1e-4,
        )
    });
}

#[test]
fn activation_gradients() {
    check_over_seeds("silu", |r| {
        let x = Tensor::randn(vec![5, 4], r).scale(2.0);
        grad_check(
            |g, v| {
                let y = g.silu(v);
                to_loss(g, y, &mut rng(13))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("relu", |r| {
        // keep inputs away from the kink at 0, where central differences lie
        let x = Tensor::<f64>::randn(vec![5, 4], r).map(|v| v + 0.3 * v.signum());
        grad_check(
            |g, v| {
                let y = g.relu(v);
                to_loss(g, y, &mut rng(14))
            },
            &x,
            1e-4,
        )
    });
}

#[test]
fn softmax_and_spatial_softmax_gradients() {
    check_over_seeds("softmax axis 0", |r| {
        let x = Tensor::randn(vec![4, 3], r).scale(2.0);
        grad_check(
            |g, v| {
                let y = g.softmax(v, 0)?;
                to_loss(g, y, &mut rng(15))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("softmax axis 1", |r| {
        let x = Tensor::randn(vec![4, 3], r).scale(2.0);
        grad_check(
            |g, v| {
                let y = g.softmax(v, 1)?;
                to_loss(g, y, &mut rng(16))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("spatial_softmax", |r| {
        let x = Tensor::randn(vec![2, 4, 5], r).scale(1.5);
        grad_check(
            |g, v| {
                let y = g.spatial_softmax(v, 1.0)?;
                to_loss(g, y, &mut rng(17))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("spatial_softmax temperature 0.5", |r| {
        let x = Tensor::randn(vec![2, 3, 3], r);
        grad_check(
            |g, v| {
                let y = g.spatial_softmax(v, 0.5)?;
                to_loss(g, y, &mut rng(18))
            },
            &x,
            1e-4,
        )
    });
}

#[test]
fn structural_op_gradients() {
    check_over_seeds("upsample_nearest_1d", |r| {
        let x = Tensor::randn(vec![3, 6], r);
        grad_check(
            |g, v| {
                let y = g.upsample_nearest_1d(v)?;
                to_loss(g, y, &mut rng(19))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("add", |r| {
        let x = Tensor::randn(vec![4, 4], r);
        let other = Tensor::randn(vec![4, 4], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                let y = g.add(v, o)?;
                to_loss(g, y, &mut rng(20))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("mul", |r| {
        let x = Tensor::randn(vec![4, 4], r);
        let other = Tensor::randn(vec![4, 4], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                let y = g.mul(v, o)?;
                to_loss(g, y, &mut rng(21))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("scale", |r| {
        let x = Tensor::randn(vec![7], r);
        grad_check(
            |g, v| {
                let y = g.scale(v, -1.7);
                to_loss(g, y, &mut rng(22))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("add_channel_bias/x", |r| {
        let x = Tensor::randn(vec![4, 5], r);
        let bias = Tensor::randn(vec![4], r);
        grad_check(
            |g, v| {
                let b = g.leaf(bias.clone());
                let y = g.add_channel_bias(v, b)?;
                to_loss(g, y, &mut rng(23))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("add_channel_bias/b", |r| {
        let x = Tensor::randn(vec![4, 5], r);
        let bias = Tensor::randn(vec![4], r);
        grad_check(
            |g, v| {
                let x = g.leaf(x.clone());
                let y = g.add_channel_bias(x, v)?;
                to_loss(g, y, &mut rng(24))
            },
            &bias,
            1e-4,
        )
    });
    check_over_seeds("concat", |r| {
        let x = Tensor::randn(vec![3, 4], r);
        let other = Tensor::randn(vec![2, 4], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                let y = g.concat(&[v, o], 0)?;
                to_loss(g, y, &mut rng(25))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("stack_rows", |r| {
        let x = Tensor::randn(vec![5], r);
        let other = Tensor::randn(vec![5], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                let y = g.stack_rows(&[v, o, v])?;
                to_loss(g, y, &mut rng(26))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("transpose", |r| {
        let x = Tensor::randn(vec![3, 5], r);
        grad_check(
            |g, v| {
                let y = g.transpose(v)?;
                to_loss(g, y, &mut rng(27))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("reshape", |r| {
        let x = Tensor::randn(vec![3, 4], r);
        grad_check(
            |g, v| {
                let y = g.reshape(v, vec![2, 6])?;
                to_loss(g, y, &mut rng(28))
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("mse/a", |r| {
        let x = Tensor::randn(vec![4, 3], r);
        let other = Tensor::randn(vec![4, 3], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                g.mse(v, o)
            },
            &x,
            1e-4,
        )
    });
    check_over_seeds("mse/b", |r| {
        let x = Tensor::randn(vec![4, 3], r);
        let other = Tensor::randn(vec![4, 3], r);
        grad_check(
            |g, v| {
                let o = g.leaf(other.clone());
                g.mse(o, v)
            },
            &x,
            1e-4,
        )
    });
}

// ---------------------------------------------------------------------------
// explicit-loop convolution oracles
// ---------------------------------------------------------------------------

/// Direct summation with the padded input materialized, mirroring the
/// implementation's term order (ascending ci then tap per output cell).
fn conv1d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    padding: usize,
) -> Tensor<f64> {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let padded = l + 2 * padding;
    let l_out = (padded - k) / stride + 1;
    let mut xpad = vec![0.0; c_in * padded];
    for ci in 0..c_in {
        xpad[ci * padded + padding..ci * padded + padding + l]
            .copy_from_slice(&x.data()[ci * l..(ci + 1) * l]);
    }
    let mut out = Tensor::zeros(vec![c_out, l_out]);
    for co in 0..c_out {
        for lo in 0..l_out {
            let mut acc = b.data()[co];
            for ci in 0..c_in {
                for t in 0..k {
                    acc += w.data()[(co * c_in + ci) * k + t] * xpad[ci * padded + lo * stride + t];
                }
            }
            out.set(&[co, lo], acc);
        }
    }
    out
}

/// Quadruple loop per output cell, skipping padding taps, ascending
/// (ci, ky, kx) — the implementation's order.
fn conv2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    padding: usize,
) -> Tensor<f64> {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (wd + 2 * padding - kw) / stride + 1;
    let mut out = Tensor::zeros(vec![c_out, h_out, w_out]);
    for co in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = b.data()[co];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < wd as isize {
                                acc += w.data()[((co * c_in + ci) * kh + ky) * kw + kx]
                                    * x.at(&[ci, iy as usize, ix as usize]);
                            }
                        }
                    }
                }
                out.set(&[co, oy, ox], acc);
            }
        }
    }
    out
}

fn assert_bitwise_equal(a: &Tensor<f64>, b: &Tensor<f64>, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shapes differ");
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        assert_eq!(
            x.to_bits(),
            y.to_bits(),
            "{what}: element {i} differs: {x} vs {y}"
        );
    }
}

#[test]
fn conv1d_matches_explicit_loops_bit_for_bit() {
    for seed in 0..SEEDS {
        let mut r = rng(0xc0de + seed);
        let c_in = r.random_range(1..=4);
        let c_out = r.random_range(1..=4);
        let k = r.random_range(1..=4);
        let l = r.random_range(k..=16);
        let stride = r.random_range(1..=2);
        let padding = r.random_range(0..=1);
        let x = Tensor::randn(vec![c_in, l], &mut r);
        let w = Tensor::randn(vec![c_out, c_in, k], &mut r);
        let b = Tensor::randn(vec![c_out], &mut r);
        let got = ops::conv1d(&x, &w, &b, stride, padding).unwrap();
        let want = conv1d_oracle(&x, &w, &b, stride, padding);
        assert_bitwise_equal(&got, &want, &format!("conv1d seed {seed}"));
    }
}

#[test]
fn conv2d_matches_explicit_loops_bit_for_bit() {
    for seed in 0..SEEDS {
        let mut r = rng(0xd0d0 + seed);
        let c_in = r.random_range(1..=4);
        let c_out = r.random_range(1..=4);
        let kh = r.random_range(1..=3);
        let kw = r.random_range(1..=3);
        let h = r.random_range(kh..=8);
        let wd = r.random_range(kw..=8);
        let stride = r.random_range(1..=2);
        let padding = r.random_range(0..=1);
        let x = Tensor::randn(vec![c_in, h, wd], &mut r);
        let w = Tensor::randn(vec![c_out, c_in, kh, kw], &mut r);
        let b = Tensor::randn(vec![c_out], &mut r);
        let got = ops::conv2d(&x, &w, &b, stride, padding).unwrap();
        let want = conv2d_oracle(&x, &w, &b, stride, padding);
        assert_bitwise_equal(&got, &want, &format!("conv2d seed {seed}"));
    }
}

#[test]
fn f32_gemm_conv2d_agrees_with_f64_loops() {
    // The f32 forward takes the im2col+GEMM route; verify it against the
    // 64-bit loop oracle within mixed-precision tolerance.
    for seed in 0..SEEDS {
        let mut r = rng(0xbeef + seed);
        let x32 = Tensor::<f32>::randn(vec![3, 12, 12], &mut r);
        let w32 = Tensor::<f32>::randn(vec![4, 3, 3, 3], &mut r).scale(0.3);
        let b32 = Tensor::<f32>::randn(vec![4], &mut r);
        let got = ops::conv2d(&x32, &w32, &b32, 2, 1).unwrap();
        let want = conv2d_oracle(&x32.cast(), &w32.cast(), &b32.cast(), 2, 1);
        for (g, w) in got.data().iter().zip(want.data()) {
            let rel = (f64::from(*g) - w).abs() / w.abs().max(1.0);
            assert!(rel < 1e-4, "seed {seed}: f32 {g} vs f64 {w}");
        }
    }
}

// ---------------------------------------------------------------------------
// statistical and structural properties
// ---------------------------------------------------------------------------

#[test]
fn group_norm_normalizes_each_group_before_affine() {
    let mut r = rng(31);
    let x = Tensor::<f64>::randn(vec![8, 16], &mut r).map(|v| 3.0 * v + 0.7);
    let gamma = Tensor::filled(vec![8], 1.0);
    let beta = Tensor::zeros(vec![8]);
    let (y, _) = ops::group_norm(&x, 4, &gamma, &beta, 1e-10).unwrap();
    let group_elems = 2 * 16;
    for g in 0..4 {
        let slab = &y.data()[g * group_elems..(g + 1) * group_elems];
        let mean: f64 = slab.iter().sum::<f64>() / group_elems as f64;
        let var: f64 =
            slab.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group_elems as f64;
        assert!(mean.abs() < 1e-6, "group {g} mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "group {g} var {var}");
    }
}

proptest! {
    #[test]
    fn softmax_output_is_a_probability_simplex(
        values in proptest::collection::vec(-30.0f64..30.0, 30),
        axis in 0usize..3,
    ) {
        let x = Tensor::new(vec![3, 5, 2], values).unwrap();
        let p = ops::softmax(&x, axis).unwrap();
        prop_assert!(p.data().iter().all(|&v| v >= 0.0));
        let a = x.shape()[axis];
        let outer: usize = x.shape()[..axis].iter().product();
        let inner: usize = x.shape()[axis + 1..].iter().product();
        for o in 0..outer {
            for i in 0..inner {
                let sum: f64 = (0..a).map(|j| p.data()[o * a * inner + j * inner + i]).sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn spatial_softmax_stays_in_unit_box(
        values in proptest::collection::vec(-50.0f64..50.0, 24),
    ) {
        let x = Tensor::new(vec![2, 3, 4], values).unwrap();
        let (out, _) = ops::spatial_softmax(&x, 1.0).unwrap();
        prop_assert!(out.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }
}
