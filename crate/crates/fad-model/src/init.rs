//! Parameter manifests and initialization.
//!
//! Each architecture module describes its parameters as an ordered list of
//! [`ParamSpec`]s. The same walk drives initialization, checkpoint layout,
//! and the shape checks when loading a checkpoint into a config, so the three
//! can never drift apart.

use fad_core::{ParamSet, Scalar, Tensor};
use rand::Rng;

/// How a parameter tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with std `sqrt(2 / fan_in)`, the usual choice before ReLU/SiLU.
    KaimingNormal { fan_in: usize },
    /// Zeros: biases and the final projection, so the denoiser starts at 0.
    Zeros,
    /// Ones: normalization gains.
    Ones,
}

/// One named parameter tensor in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init,
        }
    }
}

/// Builds a parameter set from a manifest, drawing from `rng` in manifest
/// order so initialization is a pure function of the seed.
pub fn materialize<T: Scalar>(
    specs: &[ParamSpec],
    rng: &mut impl Rng,
) -> fad_core::Result<ParamSet<T>> {
    let mut params = ParamSet::new();
    for spec in specs {
        let value = match spec.init {
            Init::KaimingNormal { fan_in } => {
                let std = T::of((2.0 / fan_in as f64).sqrt());
                Tensor::randn(spec.shape.clone(), rng).scale(std)
            }
            Init::Zeros => Tensor::zeros(spec.shape.clone()),
            Init::Ones => Tensor::filled(spec.shape.clone(), T::one()),
        };
        params.insert(&spec.name, value)?;
    }
    Ok(params)
}
