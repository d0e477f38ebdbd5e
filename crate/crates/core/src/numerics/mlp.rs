use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{GroupId, ParamStore, ParamStoreBuilder};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    /// `0.5 * (sigmoid(x) - 0.5)`, range `(-0.25, 0.25)`.
    ScaledShiftedSigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::ScaledShiftedSigmoid => scaled_shifted_sigmoid(x),
            Activation::Identity => x,
        }
    }
}

pub fn scaled_shifted_sigmoid<T: Real>(x: T) -> T {
    (x.sigmoid() - 0.5) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, activation: Activation) -> Result<Self> {
        if input == 0 || output == 0 {
            return Err(Error::config(format!(
                "layer widths must be positive, got {input} -> {output}"
            )));
        }
        Ok(Self {
            input,
            output,
            activation,
        })
    }
}

/// A fully connected layer whose weight (`[output, input]`, row-major) and
/// bias live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub name: String,
    pub spec: LayerSpec,
    pub weight: GroupId,
    pub bias: GroupId,
}

impl Dense {
    /// Register a layer with Glorot-uniform weights and zero bias.
    pub fn register<R: Rng + ?Sized>(
        builder: &mut ParamStoreBuilder,
        name: &str,
        spec: LayerSpec,
        rng: &mut R,
    ) -> Self {
        let weight = builder.glorot(format!("{name}.weight"), spec.output, spec.input, rng);
        let bias = builder.zeros(format!("{name}.bias"), &[spec.output]);
        Self {
            name: name.to_string(),
            spec,
            weight,
            bias,
        }
    }

    /// Resolve an already registered layer from a layout.
    pub fn resolve<T>(params: &ParamStore<T>, name: &str, spec: LayerSpec) -> Result<Self> {
        let layout = params.layout();
        let find = |suffix: &str| {
            layout
                .find(&format!("{name}.{suffix}"))
                .ok_or_else(|| Error::Lookup(format!("missing parameter group `{name}.{suffix}`")))
        };
        let layer = Self {
            name: name.to_string(),
            spec,
            weight: find("weight")?,
            bias: find("bias")?,
        };
        layer.check_shapes(params)?;
        Ok(layer)
    }

    fn check_shapes<T>(&self, params: &ParamStore<T>) -> Result<()> {
        let layout = params.layout();
        let w = layout.shape(self.weight);
        let b = layout.shape(self.bias);
        if w != [self.spec.output, self.spec.input] || b != [self.spec.output] {
            return Err(Error::config(format!(
                "layer `{}`: parameter shapes {w:?}/{b:?} do not match {}x{}",
                self.name, self.spec.output, self.spec.input
            )));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, params: &ParamStore<T>, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.spec.input {
            return Err(Error::config(format!(
                "layer `{}`: expected input width {}, got {}",
                self.name,
                self.spec.input,
                input.len()
            )));
        }
        let w = params.get(self.weight);
        let b = params.get(self.bias);
        if w.len() != self.spec.output * self.spec.input || b.len() != self.spec.output {
            return Err(Error::config(format!(
                "layer `{}`: parameter sizes do not match spec",
                self.name
            )));
        }
        Ok(w
            .chunks_exact(self.spec.input)
            .zip(b)
            .map(|(row, &bias)| self.spec.activation.apply(T::affine(row, input, bias)))
            .collect())
    }
}

/// Evaluate a stack of dense layers.
pub fn forward_mlp<T: Real>(layers: &[Dense], params: &ParamStore<T>, input: &[T]) -> Result<Vec<T>> {
    let mut h = input.to_vec();
    for layer in layers {
        h = layer.forward(params, &h)?;
    }
    Ok(h)
}
