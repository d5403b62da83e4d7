use std::rc::Rc;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{contract_err, Result};
use crate::nn::{Activation, Mlp, Seq};
use crate::params::{Init, ParamId, ParamStore};

/// Affine + softmax per position.
#[derive(Clone, Debug)]
pub struct TaggingHead {
    pub layer: Mlp,
    pub num_tags: usize,
}

/// Logits over all valid positions plus the mean token loss.
#[derive(Clone, Debug)]
pub struct TagOutput {
    /// `(Σ lengths) × tags`, rows grouped by time step then batch row,
    /// padded positions dropped.
    pub logits: Var,
    pub loss: Var,
    /// `(row, position)` of each logits row.
    pub index: Vec<(usize, usize)>,
}

fn valid_positions(states: &Seq) -> Vec<(usize, usize)> {
    let mut index = Vec::new();
    for t in 0..states.max_len() {
        for r in 0..states.batch() {
            if t < states.lengths[r] {
                index.push((r, t));
            }
        }
    }
    index
}

/// States at valid positions stacked into one matrix, in
/// `valid_positions` order.
fn gather_valid(g: &mut Graph, states: &Seq) -> Result<Var> {
    let mut parts = Vec::new();
    for t in 0..states.max_len() {
        let step = states.steps[t];
        if states.fully_valid(t) {
            parts.push(step);
        } else {
            for r in (0..states.batch()).filter(|&r| t < states.lengths[r]) {
                parts.push(g.slice(step, 0, r, 1)?);
            }
        }
    }
    g.concat(&parts, 0)
}

impl TaggingHead {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, num_tags: usize) -> Result<Self> {
        Ok(Self {
            layer: Mlp::new(store, prefix, &[input_dim, num_tags], &[Activation::Linear])?,
            num_tags,
        })
    }

    pub fn predict(&self, g: &Graph, out: &TagOutput, lengths: &[usize]) -> Vec<Vec<usize>> {
        let mut preds: Vec<Vec<usize>> = lengths.iter().map(|&l| vec![0; l]).collect();
        let logits = g.value(out.logits);
        for (k, &(r, t)) in out.index.iter().enumerate() {
            preds[r][t] = argmax(logits.row(k));
        }
        preds
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean token-level cross-entropy of `head` on `states` against `gold`
/// (one tag per valid position of each row).
pub fn tagging_head(
    g: &mut Graph,
    store: &ParamStore,
    head: &TaggingHead,
    states: &Seq,
    gold: &[Vec<usize>],
) -> Result<TagOutput> {
    if gold.len() != states.batch() || gold.iter().zip(states.lengths.iter()).any(|(g, &l)| g.len() != l) {
        return contract_err("gold tags not aligned with states");
    }
    let index = valid_positions(states);
    let x = gather_valid(g, states)?;
    let logits = head.layer.forward(g, store, x)?;
    let targets: Vec<Option<usize>> = index.iter().map(|&(r, t)| Some(gold[r][t])).collect();
    let loss = g.cross_entropy(logits, &targets, None, 1.0 / index.len() as f64)?;
    Ok(TagOutput { logits, loss, index })
}

/// Head selection: each token scores every candidate head (the root or
/// another token) by a dot product of dependent and head projections.
#[derive(Clone, Debug)]
pub struct ParseHead {
    pub dep: Mlp,
    pub head: Mlp,
    /// Bias-free projection of the head layer down to the dependent width.
    pub head_proj: ParamId,
    pub root: ParamId,
}

/// Per-sentence `len × (len + 1)` scores (column 0 is the root) and the
/// mean loss over scored tokens.
#[derive(Clone, Debug)]
pub struct ParseOutput {
    pub scores: Vec<Var>,
    pub loss: Var,
}

impl ParseHead {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, dep_dim: usize, hidden_dim: usize) -> Result<Self> {
        Ok(Self {
            dep: Mlp::new(store, &format!("{prefix}.dep"), &[input_dim, dep_dim], &[Activation::Tanh])?,
            head: Mlp::new(store, &format!("{prefix}.head"), &[input_dim, hidden_dim], &[Activation::Tanh])?,
            head_proj: store.add(
                &format!("{prefix}.head_proj"),
                &[hidden_dim, dep_dim],
                Init::Uniform((6.0 / (hidden_dim + dep_dim) as f64).sqrt()),
            )?,
            root: store.add(&format!("{prefix}.root"), &[1, input_dim], Init::Uniform(0.1))?,
        })
    }

    /// `len × (len + 1)` arc scores for one sentence given its `len × d` states.
    pub fn scores(&self, g: &mut Graph, store: &ParamStore, states: Var) -> Result<Var> {
        let root = g.param(store, self.root);
        let with_root = g.concat(&[root, states], 0)?;
        let d = self.dep.forward(g, store, states)?;
        let h = self.head.forward(g, store, with_root)?;
        let proj = g.param(store, self.head_proj);
        let h = g.matmul(h, proj)?;
        let ht = g.transpose(h)?;
        g.matmul(d, ht)
    }

    /// Greedy per-token head choice among the candidates.
    pub fn decode(scores: &Tensor) -> Vec<usize> {
        let (len, cols) = (scores.shape()[0], scores.shape()[1]);
        (0..len)
            .map(|i| {
                let row = scores.row(i);
                let mut best = 0;
                for j in 1..cols {
                    if j != i + 1 && row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Root and every token except itself: `mask[i * (len + 1) + j]`.
pub fn candidate_mask(len: usize) -> Rc<[bool]> {
    let mut m = vec![true; len * (len + 1)];
    for i in 0..len {
        m[i * (len + 1) + i + 1] = false;
    }
    m.into()
}

/// Mean head-selection cross-entropy over tokens whose gold head is known.
pub fn parse_head(
    g: &mut Graph,
    store: &ParamStore,
    head: &ParseHead,
    states: &Seq,
    gold: &[Vec<Option<usize>>],
) -> Result<ParseOutput> {
    if gold.len() != states.batch() || gold.iter().zip(states.lengths.iter()).any(|(g, &l)| g.len() != l) {
        return contract_err("gold heads not aligned with states");
    }
    let total: usize = gold.iter().flatten().filter(|h| h.is_some()).count();
    let scale = 1.0 / total.max(1) as f64;
    let mut scores = Vec::with_capacity(states.batch());
    let mut losses = Vec::with_capacity(states.batch());
    for (r, heads) in gold.iter().enumerate() {
        let len = states.lengths[r];
        let x = states.example(g, r)?;
        let s = head.scores(g, store, x)?;
        losses.push(g.cross_entropy(s, heads, Some(candidate_mask(len)), scale)?);
        scores.push(s);
    }
    let mut loss = losses[0];
    for &l in &losses[1..] {
        loss = g.add(loss, l)?;
    }
    Ok(ParseOutput { scores, loss })
}
