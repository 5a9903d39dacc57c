//! Named trainable parameters with persistent gradients.

use indexmap::IndexMap;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor and its gradient. The gradient always has the value's
/// shape and is zero after construction or [`Parameter::reset_grad`].
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter { value, grad }
    }

    pub fn reset_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Adds `g` into the stored gradient.
    pub fn accumulate(&mut self, g: &Tensor<T>) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(CoreError::shape(format!(
                "gradient shape {:?} vs parameter shape {:?}",
                g.shape(),
                self.value.shape()
            )));
        }
        self.grad.add_assign(g);
        Ok(())
    }
}

/// Insertion-ordered collection of named parameters. The iteration order is
/// the serialization and optimizer-state order, so it must stay stable for a
/// given model config.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    params: IndexMap<String, Parameter<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(CoreError::arg(format!("duplicate parameter name {name:?}")));
        }
        self.params.insert(name.to_string(), Parameter::new(value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.params
            .get(name)
            .ok_or_else(|| CoreError::arg(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| CoreError::arg(format!("unknown parameter {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total element count across all parameters.
    pub fn num_elements(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.reset_grad();
        }
    }

    /// Casts every parameter value (gradients reset) to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (name, p) in self.iter() {
            out.params
                .insert(name.to_string(), Parameter::new(p.value.cast::<U>()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_preserved() {
        let mut ps = ParamSet::<f32>::new();
        for name in ["stem.w", "stem.b", "head.w"] {
            ps.insert(name, Tensor::zeros(vec![2])).unwrap();
        }
        let names: Vec<&str> = ps.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["stem.w", "stem.b", "head.w"]);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("w", Tensor::zeros(vec![1])).unwrap();
        assert!(ps.insert("w", Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn gradients_accumulate_and_reset() {
        let mut p = Parameter::new(Tensor::<f64>::filled(vec![2], 1.0));
        let g = Tensor::filled(vec![2], 0.5);
        p.accumulate(&g).unwrap();
        p.accumulate(&g).unwrap();
        assert_eq!(p.grad.data(), &[1.0, 1.0]);
        p.reset_grad();
        assert_eq!(p.grad.data(), &[0.0, 0.0]);
        assert!(p.accumulate(&Tensor::zeros(vec![3])).is_err());
    }
}
