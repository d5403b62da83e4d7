use crate::autodiff::{Graph, Var};
use crate::error::{contract_err, Result};
use crate::nn::{soft_align_seqs, BiLstm, Seq};
use crate::params::ParamStore;

/// Task-private sentence encoder.
#[derive(Clone, Debug)]
pub enum PrivateEncoder {
    /// One BiLSTM over the sentence.
    Single(BiLstm),
    /// BiLSTM over each sentence, soft alignment, `[u; ũ; u−ũ; u⊙ũ]`
    /// enhancement, then a second BiLSTM.
    Pair { first: BiLstm, second: BiLstm },
}

impl PrivateEncoder {
    pub fn new_single(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self::Single(BiLstm::new(store, &format!("{prefix}.private"), input_dim, hidden)?))
    }

    pub fn new_pair(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Result<Self> {
        let first = BiLstm::new(store, &format!("{prefix}.private1"), input_dim, hidden)?;
        let second = BiLstm::new(store, &format!("{prefix}.private2"), 4 * first.output_dim(), hidden)?;
        Ok(Self::Pair { first, second })
    }

    pub fn arity(&self) -> usize {
        match self {
            Self::Single(_) => 1,
            Self::Pair { .. } => 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Single(l) => l.output_dim(),
            Self::Pair { second, .. } => second.output_dim(),
        }
    }

    /// One output sequence per input view.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, views: &[Seq]) -> Result<Vec<Seq>> {
        if views.len() != self.arity() {
            return contract_err(format!("encoder takes {} sentence(s), got {}", self.arity(), views.len()));
        }
        match self {
            Self::Single(l) => Ok(vec![l.forward(g, store, &views[0])?]),
            Self::Pair { first, second } => {
                let u = first.forward(g, store, &views[0])?;
                let w = first.forward(g, store, &views[1])?;
                let (u_t, w_t) = soft_align_seqs(g, &u, &w)?;
                let a = enhance(g, &u, &u_t)?;
                let b = enhance(g, &w, &w_t)?;
                Ok(vec![second.forward(g, store, &a)?, second.forward(g, store, &b)?])
            }
        }
    }
}

fn enhance(g: &mut Graph, x: &Seq, aligned: &Seq) -> Result<Seq> {
    let steps = x
        .steps
        .iter()
        .zip(&aligned.steps)
        .map(|(&u, &ut)| {
            let diff = g.sub(u, ut)?;
            let prod = g.mul(u, ut)?;
            g.concat(&[u, ut, diff, prod], 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(x.with_steps(steps))
}

/// `[masked mean; masked max]` over each row's positions.
pub fn pool(g: &mut Graph, seq: &Seq) -> Result<Var> {
    if seq.max_len() == 0 || seq.lengths.contains(&0) {
        return contract_err("pooling a zero-length sentence");
    }
    seq.pool_mean_max(g)
}

/// `[v_a; v_b; |v_a − v_b|; v_a ⊙ v_b]`.
pub fn pair_merge(g: &mut Graph, va: Var, vb: Var) -> Result<Var> {
    let diff = g.sub(va, vb)?;
    let abs = g.abs(diff)?;
    let prod = g.mul(va, vb)?;
    g.concat(&[va, vb, abs, prod], 1)
}

/// `Σ λ_k L_k`.
pub fn multitask_loss(g: &mut Graph, losses: &[Var], weights: &[f64]) -> Result<Var> {
    if losses.len() != weights.len() || losses.is_empty() {
        return contract_err(format!("{} losses with {} weights", losses.len(), weights.len()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return contract_err("task weights must be ≥ 0");
    }
    let mut total = g.scale(losses[0], weights[0])?;
    for (&l, &w) in losses.iter().zip(weights).skip(1) {
        let t = g.scale(l, w)?;
        total = g.add(total, t)?;
    }
    Ok(total)
}

/// Rows `start..start + len` of every step, trimmed to the longest of
/// those rows.
pub(crate) fn take_rows(g: &mut Graph, seq: &Seq, start: usize, len: usize) -> Result<Seq> {
    if start == 0 && len == seq.batch() {
        return Ok(seq.clone());
    }
    let lengths: Vec<usize> = seq.lengths[start..start + len].to_vec();
    let max = lengths.iter().copied().max().unwrap_or(0);
    let steps = seq.steps[..max]
        .iter()
        .map(|&s| g.slice(s, 0, start, len))
        .collect::<Result<Vec<_>>>()?;
    Seq::new(steps, lengths.into())
}
