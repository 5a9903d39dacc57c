//! Binding a named parameter set into an autodiff graph.

use fad_core::{Graph, ParamSet, Scalar, Var};
use std::collections::HashMap;

use crate::error::{ModelError, Result};

/// Name-to-variable map for one graph. Builders look parameters up by name,
/// so the forward pass fails fast if the parameter set and the architecture
/// walk ever disagree.
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    /// Registers every parameter with the graph. `trainable` decides whether
    /// gradients flow to them (`param`) or they enter as constants (`leaf`).
    pub fn bind<T: Scalar>(g: &mut Graph<T>, params: &ParamSet<T>, trainable: bool) -> Bound {
        let mut vars = HashMap::with_capacity(params.len());
        for (name, p) in params.iter() {
            let var = if trainable {
                g.param(p.value.clone())
            } else {
                g.leaf(p.value.clone())
            };
            vars.insert(name.to_string(), var);
        }
        Bound { vars }
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Overrides (or adds) a single binding. Lets callers substitute one
    /// parameter with an externally built variable, e.g. to probe gradients
    /// with respect to that parameter alone.
    pub fn insert(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::invalid(format!("unknown parameter '{name}'")))
    }

    /// Accumulates each bound parameter's gradient back into `params` after a
    /// backward pass. No-op for leaf-bound (non-trainable) graphs.
    pub fn collect_grads<T: Scalar>(
        &self,
        g: &Graph<T>,
        params: &mut ParamSet<T>,
    ) -> fad_core::Result<()> {
        for (name, p) in params.iter_mut() {
            if let Some(&var) = self.vars.get(name) {
                if let Some(grad) = g.grad(var) {
                    p.accumulate(grad)?;
                }
            }
        }
        Ok(())
    }
}
