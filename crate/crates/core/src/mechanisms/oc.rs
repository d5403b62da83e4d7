use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{contract_err, Result};

/// `λ · Σ ‖Sᵀ P‖²_F` over `(S, P)` pairs whose rows are the positions of
/// one sentence. No pairs gives a constant zero.
pub fn oc_penalty(g: &mut Graph, pairs: &[(Var, Var)], lambda: f64) -> Result<Var> {
    let mut terms = Vec::with_capacity(pairs.len());
    for &(s, p) in pairs {
        let (ss, ps) = (g.shape(s).to_vec(), g.shape(p).to_vec());
        if ss.len() != 2 || ps.len() != 2 || ss[0] != ps[0] {
            return contract_err(format!("orthogonality pair with shapes {ss:?} and {ps:?}"));
        }
        let st = g.transpose(s)?;
        let cross = g.matmul(st, p)?;
        terms.push(g.frobenius_sq(cross)?);
    }
    if terms.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    g.scale(total, lambda)
}
