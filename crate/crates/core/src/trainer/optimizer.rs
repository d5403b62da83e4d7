use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    Sgd,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Algorithm::Adam),
            "sgd" => Ok(Algorithm::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip: Option<f64>,
    pub epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            lr: 1e-3,
            clip: Some(5.0),
            epochs: 30,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // lr 0 is allowed: it freezes the model, which tests rely on
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be ≥ 0", self.lr)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm {c} must be > 0")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Optimizer state over one parameter store.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

/// Global gradient norm before and after clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipStats {
    pub before: f64,
    pub after: f64,
}

/// Rescales every trainable gradient so the global norm is at most `max`.
pub fn clip_gradients(store: &mut ParamStore, max: Option<f64>) -> ClipStats {
    let before = trainable_norm(store);
    let Some(max) = max else {
        return ClipStats { before, after: before };
    };
    if before > max {
        let s = max / before;
        for p in store.iter_mut().filter(|p| p.trainable) {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    ClipStats {
        before,
        after: trainable_norm(store),
    }
}

fn trainable_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Clips the stored gradients and applies one update.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<ClipStats> {
        let stats = clip_gradients(store, self.config.clip);
        if !stats.after.is_finite() {
            return Err(Error::Divergence { term: "gradient".into() });
        }
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let data = p.value.data_mut();
            match c.algorithm {
                Algorithm::Sgd => {
                    for (w, g) in data.iter_mut().zip(&p.grad) {
                        *w -= c.lr * g;
                    }
                }
                Algorithm::Adam => {
                    for (((w, g), m), v) in data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                        *w -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    fn store() -> ParamStore {
        let mut s = ParamStore::new(1);
        let id = s.add("w", &[3], Init::Uniform(1.0)).unwrap();
        s.get_mut(id).grad = vec![3.0, 4.0, 12.0];
        s
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut s = store();
        let stats = clip_gradients(&mut s, Some(5.0));
        assert_eq!(stats.before, 13.0);
        assert!(stats.after <= 5.0 + 1e-9);
        let mut s = store();
        assert_eq!(clip_gradients(&mut s, None).after, 13.0);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut s = store();
        let before = s.snapshot();
        let mut opt = Optimizer::new(
            OptimizerConfig {
                lr: 0.0,
                ..Default::default()
            },
            &s,
        );
        opt.step(&mut s).unwrap();
        assert_eq!(s.snapshot(), before);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut s = store();
        let before = s.snapshot()[0].data().to_vec();
        let mut opt = Optimizer::new(
            OptimizerConfig {
                clip: None,
                ..Default::default()
            },
            &s,
        );
        opt.step(&mut s).unwrap();
        for (a, b) in before.iter().zip(s.snapshot()[0].data()) {
            assert!(((a - b) - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut s = store();
        let id = s.id("w").unwrap();
        s.get_mut(id).grad[0] = f64::NAN;
        let mut opt = Optimizer::new(OptimizerConfig::default(), &s);
        assert!(matches!(opt.step(&mut s), Err(Error::Divergence { .. })));
    }
}
