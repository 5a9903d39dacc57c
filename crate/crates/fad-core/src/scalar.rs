//! Scalar abstraction over the element type of tensors.
//!
//! The whole numerical core is generic over [`Scalar`], so the training
//! pipeline runs in `f32` while verification (gradient checks, oracle
//! chains) runs the identical code in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type of a [`crate::Tensor`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Whether convolution forwards should route through the blocked GEMM.
    /// The verification precision keeps plain nested loops instead, so
    /// explicit-loop oracles can match bit-for-bit (a blocked FMA kernel
    /// rounds differently).
    const CONV_VIA_GEMM: bool;

    /// Lossy conversion from `f64`, for schedule coefficients and literals.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every scalar type")
    }

    /// Widen to `f64` for accumulation and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("every scalar widens to f64")
    }

    /// `C <- alpha * A * B + beta * C` on row-major buffers.
    ///
    /// # Safety
    /// The pointers must address `m*k`, `k*n` and `m*n` valid elements with
    /// the given strides. Use [`crate::ops::gemm`] instead of calling this.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const CONV_VIA_GEMM: bool = true;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const CONV_VIA_GEMM: bool = false;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
