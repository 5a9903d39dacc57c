//! Finite-difference verification of reverse-mode gradients.

use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Maximum relative error between the analytic gradient of `f` at `x` and a
/// central difference with step `h`, per coordinate:
/// `|analytic - numeric| / max(1, |numeric|)`.
///
/// `f` must build a scalar-valued graph from the single input var. Run this in
/// 64-bit; central differences in f32 drown in rounding error.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, h: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    if h <= T::zero() {
        return Err(CoreError::arg("grad_check step must be > 0"));
    }
    let mut g = Graph::new();
    let px = g.param(x.clone());
    let root = f(&mut g, px)?;
    g.value(root).ensure_finite("grad_check forward value")?;
    g.backward(root)?;
    let analytic = g.grad_or_zeros(px);

    let eval = |probe: Tensor<T>| -> Result<T> {
        let mut g = Graph::new();
        let v = g.param(probe);
        let root = f(&mut g, v)?;
        let y = g.value(root).item();
        if !y.is_finite() {
            return Err(CoreError::non_finite("grad_check probe value"));
        }
        Ok(y)
    };

    let mut max_rel = T::zero();
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (T::of(2.0) * h);
        let rel = (analytic.data()[i] - numeric).abs() / T::one().max(numeric.abs());
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
