use std::ops::Range;

use crate::autodiff::{Graph, Var};
use crate::error::{contract_err, Error, Result};
use crate::nn::{Activation, Mlp};
use crate::params::ParamStore;

/// One softmax over the union of several tasks' label sets, through a
/// projection shared by all of them.
#[derive(Clone, Debug)]
pub struct JointLabelSpace {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    pub projection: Mlp,
}

impl JointLabelSpace {
    pub fn new(store: &mut ParamStore, input_dim: usize, sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Config(format!("joint label space over sizes {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &n in sizes {
            offsets.push(total);
            total += n;
        }
        let projection = Mlp::new(store, "label_embed.proj", &[input_dim, total], &[Activation::Linear])?;
        Ok(Self {
            offsets,
            sizes: sizes.to_vec(),
            projection,
        })
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn slice(&self, slot: usize) -> Range<usize> {
        self.offsets[slot]..self.offsets[slot] + self.sizes[slot]
    }

    /// Joint index of `label` in the slot's slice.
    pub fn target(&self, slot: usize, label: usize) -> Result<usize> {
        if label >= self.sizes[slot] {
            return contract_err(format!("label {label} outside slice of width {}", self.sizes[slot]));
        }
        Ok(self.offsets[slot] + label)
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, v: Var) -> Result<Var> {
        self.projection.forward(g, store, v)
    }

    /// Per-row argmax restricted to the slot's slice, as a task-local label.
    pub fn predict(&self, logits: &[f64], slot: usize) -> Vec<usize> {
        let n = self.total();
        let range = self.slice(slot);
        logits
            .chunks(n)
            .map(|row| {
                let part = &row[range.clone()];
                let mut best = 0;
                for (i, &v) in part.iter().enumerate() {
                    if v > part[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Joint distribution over all labels and the task's loss: mean
/// cross-entropy against the one-hot target inside the slot's slice,
/// times `weight`.
pub fn label_embed_output(
    g: &mut Graph,
    store: &ParamStore,
    space: &JointLabelSpace,
    v: Var,
    slot: usize,
    labels: &[usize],
    weight: f64,
) -> Result<(Var, Var, Var)> {
    let logits = space.logits(g, store, v)?;
    let targets = labels
        .iter()
        .map(|&l| space.target(slot, l).map(Some))
        .collect::<Result<Vec<_>>>()?;
    let loss = g.cross_entropy(logits, &targets, None, weight / labels.len().max(1) as f64)?;
    let probs = g.softmax(logits)?;
    Ok((probs, logits, loss))
}
