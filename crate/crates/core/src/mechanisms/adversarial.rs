use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Seq};
use crate::params::ParamStore;

/// Single affine + softmax task classifier over sentence representations.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub layer: Mlp,
    pub num_tasks: usize,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, input_dim: usize, num_tasks: usize) -> Result<Self> {
        if num_tasks < 2 {
            return Err(Error::Config("adversarial training needs at least 2 tasks".into()));
        }
        let layer = Mlp::new(store, "adversarial.disc", &[input_dim, num_tasks], &[Activation::Linear])?;
        Ok(Self { layer, num_tasks })
    }

    /// Task logits for `batch × input_dim` representations.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, rep: Var) -> Result<Var> {
        self.layer.forward(g, store, rep)
    }
}

/// Mean cross-entropy of the discriminator against `task` on the masked
/// mean of `top`, routed through a gradient reversal of weight `lambda`.
pub fn adversarial_loss(
    g: &mut Graph,
    store: &ParamStore,
    disc: &Discriminator,
    top: &Seq,
    task: usize,
    lambda: f64,
) -> Result<Var> {
    if task >= disc.num_tasks {
        return Err(Error::Index(format!("task {task} of {}", disc.num_tasks)));
    }
    let rep = top.pool_mean(g)?;
    let rev = g.grad_reverse(rep, lambda)?;
    let logits = disc.logits(g, store, rev)?;
    let targets = vec![Some(task); top.batch()];
    g.cross_entropy(logits, &targets, None, 1.0 / top.batch() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn seq(g: &mut Graph, rows: &[Vec<Vec<f64>>], lengths: Vec<usize>) -> Seq {
        let steps = rows.iter().map(|r| g.leaf(Tensor::from_rows(r).unwrap())).collect();
        Seq::new(steps, lengths.into()).unwrap()
    }

    #[test]
    fn single_task_is_config_error() {
        let mut store = ParamStore::new(0);
        assert!(matches!(Discriminator::new(&mut store, 4, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_discriminator_gives_ln2() {
        let mut store = ParamStore::new(0);
        let disc = Discriminator::new(&mut store, 2, 2).unwrap();
        store.iter_mut().for_each(|p| p.value.data_mut().fill(0.0));
        let mut g = Graph::new();
        let s = seq(&mut g, &[vec![vec![1.0, 2.0], vec![0.5, -1.0]]], vec![1, 1]);
        let l = adversarial_loss(&mut g, &store, &disc, &s, 1, 0.05).unwrap();
        assert!((g.scalar_value(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reversal_scales_encoder_gradient_only() {
        let mut store = ParamStore::new(4);
        let disc = Discriminator::new(&mut store, 3, 3).unwrap();
        let rows = vec![
            vec![vec![0.3, -0.2, 0.9], vec![0.1, 0.4, -0.5]],
            vec![vec![-0.7, 0.2, 0.1], vec![0.0, 0.0, 0.0]],
        ];
        let run = |lambda: Option<f64>| {
            let mut g = Graph::new();
            let s = seq(&mut g, &rows, vec![2, 1]);
            let loss = match lambda {
                Some(l) => adversarial_loss(&mut g, &store, &disc, &s, 2, l).unwrap(),
                None => {
                    let rep = s.pool_mean(&mut g).unwrap();
                    let logits = disc.logits(&mut g, &store, rep).unwrap();
                    g.cross_entropy(logits, &[Some(2), Some(2)], None, 0.5).unwrap()
                }
            };
            g.backward(loss).unwrap();
            let input_grad: Vec<f64> = s.steps.iter().flat_map(|v| g.grad(*v).unwrap().to_vec()).collect();
            let w = g.param_var(disc.layer.weight(0)).unwrap();
            (input_grad, g.grad(w).unwrap().to_vec())
        };
        let (rev_in, rev_w) = run(Some(0.05));
        let (plain_in, plain_w) = run(None);
        for (a, b) in rev_in.iter().zip(&plain_in) {
            assert!((a + 0.05 * b).abs() < 1e-12);
        }
        assert_eq!(rev_w, plain_w);
    }
}
