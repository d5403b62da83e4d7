use crate::autodiff::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::params::{Init, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
    activation: Activation,
}

/// Stack of affine layers, each followed by its own activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Dense>,
}

impl Mlp {
    /// `dims` lists input width then each layer's output width;
    /// `activations` has one entry per layer.
    pub fn new(store: &mut ParamStore, prefix: &str, dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return dim_err(format!("MLP dims {dims:?} with {} activations", activations.len()));
        }
        let mut layers = Vec::new();
        for (k, (pair, &activation)) in dims.windows(2).zip(activations).enumerate() {
            let bound = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            let weight = store.add(&format!("{prefix}.{k}.w"), &[pair[0], pair[1]], Init::Uniform(bound))?;
            let bias = store.add(&format!("{prefix}.{k}.b"), &[pair[1]], Init::Zeros)?;
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn weight(&self, layer: usize) -> ParamId {
        self.layers[layer].weight
    }

    pub fn bias(&self, layer: usize) -> ParamId {
        self.layers[layer].bias
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.input_dim()) {
            return dim_err(format!("MLP expects width {}, got {:?}", self.input_dim(), g.shape(x)));
        }
        let mut h = x;
        for layer in &self.layers {
            let w = g.param(store, layer.weight);
            let b = g.param(store, layer.bias);
            h = g.affine(h, w, b)?;
            h = match layer.activation {
                Activation::Linear => h,
                Activation::Tanh => g.tanh(h)?,
                Activation::Sigmoid => g.sigmoid(h)?,
            };
        }
        Ok(h)
    }
}
