//! Central finite-difference checks against the tape's gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::{contract_err, Result};
use crate::params::{ParamId, ParamStore};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradReport {
    /// `max |analytic − numeric| / max(|analytic|, 1e-8)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location of the worst entry, as `(input or parameter label, flat index)`.
    pub worst: Option<(String, usize)>,
}

impl GradReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            checked: 0,
            worst: None,
        }
    }

    fn record(&mut self, label: &str, idx: usize, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(1e-8);
        self.checked += 1;
        if err >= self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((label.to_string(), idx));
        }
    }
}

/// Checks every entry of every input tensor. `build` receives one trainable
/// leaf per input and must return a scalar.
pub fn check_inputs<F>(inputs: &[Tensor], eps: f64, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.scalar_value(out))
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return contract_err("gradient check needs a scalar output");
    }
    g.backward(out)?;
    let mut report = GradReport::new();
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad_tensor(*v);
        for idx in 0..inputs[k].numel() {
            let orig = work[k].data()[idx];
            work[k].data_mut()[idx] = orig + eps;
            let plus = eval(&work)?;
            work[k].data_mut()[idx] = orig - eps;
            let minus = eval(&work)?;
            work[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            report.record(&format!("input{k}"), idx, analytic.data()[idx], numeric);
        }
    }
    Ok(report)
}

/// Checks up to `max_entries` randomly chosen scalar entries across the
/// trainable parameters of `store`. `loss` builds the scalar objective.
pub fn check_params<F>(
    store: &ParamStore,
    eps: f64,
    max_entries: usize,
    seed: u64,
    loss: F,
) -> Result<GradReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = loss(&mut g, store)?;
    if g.value(out).numel() != 1 {
        return contract_err("gradient check needs a scalar output");
    }
    g.backward(out)?;
    let mut entries: Vec<(ParamId, usize)> = Vec::new();
    for id in store.ids() {
        let p = store.get(id);
        if !p.trainable {
            continue;
        }
        let cols = *p.value.shape().last().unwrap_or(&1);
        for idx in 0..p.value.numel() {
            if p.frozen_rows.contains(&(idx / cols)) {
                continue;
            }
            entries.push((id, idx));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<(ParamId, usize)> = if entries.len() > max_entries {
        sample(&mut rng, entries.len(), max_entries)
            .into_iter()
            .map(|i| entries[i])
            .collect()
    } else {
        entries
    };
    let mut work = store.clone();
    let mut report = GradReport::new();
    for (id, idx) in chosen {
        let analytic = match g.param_var(id) {
            Some(v) => g.grad(v).map_or(0.0, |gr| gr[idx]),
            None => 0.0,
        };
        let orig = work.get(id).value.data()[idx];
        work.get_mut(id).value.data_mut()[idx] = orig + eps;
        let plus = {
            let mut gg = Graph::new();
            let o = loss(&mut gg, &work)?;
            gg.scalar_value(o)
        };
        work.get_mut(id).value.data_mut()[idx] = orig - eps;
        let minus = {
            let mut gg = Graph::new();
            let o = loss(&mut gg, &work)?;
            gg.scalar_value(o)
        };
        work.get_mut(id).value.data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        report.record(&store.get(id).name, idx, analytic, numeric);
    }
    Ok(report)
}
