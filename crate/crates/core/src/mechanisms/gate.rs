use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::params::ParamStore;

/// Which of a task's two gates to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateLevel {
    /// Acts on per-position task features.
    Features,
    /// Acts on pooled sentence vectors.
    Pooled,
}

/// A task's two sigmoid gates, applied to that task's features when it
/// donates them to another task.
#[derive(Clone, Debug)]
pub struct GateParams {
    pub features: Mlp,
    pub pooled: Mlp,
}

impl GateParams {
    pub fn new(store: &mut ParamStore, prefix: &str, feature_dim: usize, pooled_dim: usize) -> Result<Self> {
        Ok(Self {
            features: Mlp::new(
                store,
                &format!("{prefix}.g1"),
                &[feature_dim, feature_dim],
                &[Activation::Sigmoid],
            )?,
            pooled: Mlp::new(store, &format!("{prefix}.g2"), &[pooled_dim, pooled_dim], &[Activation::Sigmoid])?,
        })
    }

    fn mlp(&self, level: GateLevel) -> &Mlp {
        match level {
            GateLevel::Features => &self.features,
            GateLevel::Pooled => &self.pooled,
        }
    }

    /// `σ(x W + b) ⊙ x`.
    pub fn donation(&self, g: &mut Graph, store: &ParamStore, x: Var, level: GateLevel) -> Result<Var> {
        let mlp = self.mlp(level);
        if g.shape(x).last() != Some(&mlp.input_dim()) {
            return Err(Error::Config(format!(
                "gate expects width {}, got {:?}",
                mlp.input_dim(),
                g.shape(x)
            )));
        }
        let gate = mlp.forward(g, store, x)?;
        g.mul(gate, x)
    }
}

/// `own + Σ σ(x_n W_n + b_n) ⊙ x_n` over donor features `x_n`.
pub fn gate_merge(
    g: &mut Graph,
    store: &ParamStore,
    own: Var,
    donors: &[(&GateParams, Var)],
    level: GateLevel,
) -> Result<Var> {
    let mut out = own;
    for &(gate, x) in donors {
        if g.shape(x) != g.shape(own) {
            return Err(Error::Config(format!(
                "donor features {:?} differ from own {:?}",
                g.shape(x),
                g.shape(own)
            )));
        }
        let d = gate.donation(g, store, x, level)?;
        out = g.add(out, d)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_params;
    use crate::autodiff::{sigmoid, Tensor};
    use crate::params::Init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn set_bias(store: &mut ParamStore, gate: &GateParams, value: f64, zero_w: bool) {
        for mlp in [&gate.features, &gate.pooled] {
            store.get_mut(mlp.bias(0)).value.data_mut().fill(value);
            if zero_w {
                store.get_mut(mlp.weight(0)).value.data_mut().fill(0.0);
            }
        }
    }

    #[test]
    fn closed_gate_keeps_own_features() {
        let mut store = ParamStore::new(1);
        let gate = GateParams::new(&mut store, "t1.gate", 3, 6).unwrap();
        set_bias(&mut store, &gate, -50.0, true);
        let mut g = Graph::new();
        let own = g.constant(random(2, 3, 1));
        let donor = g.constant(random(2, 3, 2));
        let m = gate_merge(&mut g, &store, own, &[(&gate, donor)], GateLevel::Features).unwrap();
        assert!(g.value(m).max_abs_diff(g.value(own)) < 1e-9);
    }

    #[test]
    fn open_gate_adds_donors() {
        let mut store = ParamStore::new(1);
        let gate = GateParams::new(&mut store, "t1.gate", 3, 6).unwrap();
        set_bias(&mut store, &gate, 50.0, true);
        let mut g = Graph::new();
        let own = g.constant(random(2, 6, 1));
        let donor = g.constant(random(2, 6, 2));
        let m = gate_merge(&mut g, &store, own, &[(&gate, donor)], GateLevel::Pooled).unwrap();
        let sum: Vec<f64> = g.value(own).data().iter().zip(g.value(donor).data()).map(|(a, b)| a + b).collect();
        assert!(g.value(m).max_abs_diff(&Tensor::new(vec![2, 6], sum).unwrap()) < 1e-9);
    }

    #[test]
    fn matches_direct_formula() {
        let mut store = ParamStore::new(5);
        let gate_a = GateParams::new(&mut store, "a.gate", 3, 6).unwrap();
        let gate_b = GateParams::new(&mut store, "b.gate", 3, 6).unwrap();
        let own = random(2, 3, 10);
        let xa = random(2, 3, 11);
        let xb = random(2, 3, 12);
        let mut g = Graph::new();
        let (o, a, b) = (g.constant(own.clone()), g.constant(xa.clone()), g.constant(xb.clone()));
        let m = gate_merge(&mut g, &store, o, &[(&gate_a, a), (&gate_b, b)], GateLevel::Features).unwrap();
        let mut expect = own.data().to_vec();
        for (gate, x) in [(&gate_a, &xa), (&gate_b, &xb)] {
            let w = &store.get(gate.features.weight(0)).value;
            let bias = &store.get(gate.features.bias(0)).value;
            for r in 0..2 {
                for c in 0..3 {
                    let z: f64 = (0..3).map(|k| x.get2(r, k) * w.get2(k, c)).sum::<f64>() + bias.data()[c];
                    expect[r * 3 + c] += sigmoid(z) * x.get2(r, c);
                }
            }
        }
        assert!(g.value(m).max_abs_diff(&Tensor::new(vec![2, 3], expect).unwrap()) < 1e-12);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let mut store = ParamStore::new(5);
        let gate = GateParams::new(&mut store, "a.gate", 3, 6).unwrap();
        let mut g = Graph::new();
        let own = g.constant(random(2, 3, 1));
        let bad = g.constant(random(2, 4, 1));
        let r = gate_merge(&mut g, &store, own, &[(&gate, bad)], GateLevel::Features);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut store = ParamStore::new(8);
        let gate = GateParams::new(&mut store, "a.gate", 3, 4).unwrap();
        let own = store.add("own", &[2, 4], Init::Uniform(1.0)).unwrap();
        let donor = store.add("donor", &[2, 4], Init::Uniform(1.0)).unwrap();
        let r = check_params(&store, 1e-5, 200, 0, |g, s| {
            let (o, d) = (g.param(s, own), g.param(s, donor));
            let m = gate_merge(g, s, o, &[(&gate, d)], GateLevel::Pooled)?;
            let sq = g.mul(m, m)?;
            g.sum_all(sq)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }
}
