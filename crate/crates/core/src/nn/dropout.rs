use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{contract_err, Result};
use crate::nn::Seq;

/// Inverted dropout: kept entries are scaled by `1 / (1 - rate)` so the
/// expectation is unchanged. Identity outside training or at rate 0.
pub fn dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return contract_err(format!("dropout rate {rate} outside [0, 1)"));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?);
    g.mul(x, m)
}

/// Dropout on every step of a sequence.
pub fn dropout_seq<R: Rng>(g: &mut Graph, seq: &Seq, rate: f64, training: bool, rng: &mut R) -> Result<Seq> {
    if !training || rate == 0.0 {
        if !(0.0..1.0).contains(&rate) {
            return contract_err(format!("dropout rate {rate} outside [0, 1)"));
        }
        return Ok(seq.clone());
    }
    let steps = seq
        .steps
        .iter()
        .map(|&s| dropout(g, s, rate, training, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(seq.with_steps(steps))
}
