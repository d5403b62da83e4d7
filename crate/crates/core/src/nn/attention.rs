use crate::autodiff::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::nn::Seq;

/// Soft alignment between two sequences of one example.
#[derive(Clone, Copy, Debug)]
pub struct Alignment {
    /// `len_a × d`: for each `a_i`, the attention-weighted sum over `b`.
    pub a_tilde: Var,
    /// `len_b × d`: for each `b_j`, the attention-weighted sum over `a`.
    pub b_tilde: Var,
    /// `len_a × len_b` row-normalized weights.
    pub weights_a: Var,
    /// `len_b × len_a` row-normalized weights.
    pub weights_b: Var,
}

/// Dot-product soft alignment of `a` (`len_a × d`) against `b` (`len_b × d`).
pub fn soft_align(g: &mut Graph, a: Var, b: Var) -> Result<Alignment> {
    let (sa, sb) = (g.shape(a).to_vec(), g.shape(b).to_vec());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
        return dim_err(format!("aligning {sa:?} with {sb:?}"));
    }
    if sa[0] == 0 || sb[0] == 0 {
        return dim_err("aligning an empty sequence");
    }
    let bt = g.transpose(b)?;
    let scores = g.matmul(a, bt)?;
    let weights_a = g.softmax(scores)?;
    let a_tilde = g.matmul(weights_a, b)?;
    let scores_t = g.transpose(scores)?;
    let weights_b = g.softmax(scores_t)?;
    let b_tilde = g.matmul(weights_b, a)?;
    Ok(Alignment {
        a_tilde,
        b_tilde,
        weights_a,
        weights_b,
    })
}

/// Aligns each example of two padded batches, returning the aligned
/// counterparts as sequences with the same padding as their sources.
pub fn soft_align_seqs(g: &mut Graph, a: &Seq, b: &Seq) -> Result<(Seq, Seq)> {
    if a.batch() != b.batch() {
        return dim_err("pair batches differ in size");
    }
    let mut at = Vec::with_capacity(a.batch());
    let mut bt = Vec::with_capacity(a.batch());
    for r in 0..a.batch() {
        let ar = a.example(g, r)?;
        let br = b.example(g, r)?;
        let al = soft_align(g, ar, br)?;
        at.push(al.a_tilde);
        bt.push(al.b_tilde);
    }
    let a_steps = (0..a.max_len()).map(|t| g.time_step(&at, t)).collect::<Result<Vec<_>>>()?;
    let b_steps = (0..b.max_len()).map(|t| g.time_step(&bt, t)).collect::<Result<Vec<_>>>()?;
    Ok((a.with_steps(a_steps), b.with_steps(b_steps)))
}
