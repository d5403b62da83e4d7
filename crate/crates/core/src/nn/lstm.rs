use std::rc::Rc;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{dim_err, Result};
use crate::nn::Seq;
use crate::params::{Init, ParamId, ParamStore};

/// One LSTM direction. The four gates share one `(input + hidden) × 4·hidden`
/// weight matrix, column blocks ordered input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Lstm {
    /// Weights uniform in ±1/√hidden, biases zero except the forget gate at 1.
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if hidden_dim == 0 {
            return dim_err("LSTM hidden size must be positive");
        }
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let weight = store.add(
            &format!("{prefix}.w"),
            &[input_dim + hidden_dim, 4 * hidden_dim],
            Init::Uniform(bound),
        )?;
        let mut b = vec![0.0; 4 * hidden_dim];
        b[hidden_dim..2 * hidden_dim].iter_mut().for_each(|v| *v = 1.0);
        let bias = store.add(&format!("{prefix}.b"), &[4 * hidden_dim], Init::Value(Tensor::vector(b)))?;
        Ok(Self {
            input_dim,
            hidden_dim,
            weight,
            bias,
        })
    }

    /// One recurrence step on `batch × dim` rows; returns `(h', c')`.
    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden_dim;
        if g.shape(x).get(1) != Some(&self.input_dim) {
            return dim_err(format!("LSTM expects input width {}, got {:?}", self.input_dim, g.shape(x)));
        }
        if g.shape(h).get(1) != Some(&hd) || g.shape(c).get(1) != Some(&hd) {
            return dim_err("LSTM state width mismatch");
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xh = g.concat(&[x, h], 1)?;
        let z = g.affine(xh, w, b)?;
        let zi = g.slice(z, 1, 0, hd)?;
        let zf = g.slice(z, 1, hd, hd)?;
        let zg = g.slice(z, 1, 2 * hd, hd)?;
        let zo = g.slice(z, 1, 3 * hd, hd)?;
        let i = g.sigmoid(zi)?;
        let f = g.sigmoid(zf)?;
        let cand = g.tanh(zg)?;
        let o = g.sigmoid(zo)?;
        let fc = g.mul(f, c)?;
        let ig = g.mul(i, cand)?;
        let c_next = g.add(fc, ig)?;
        let tc = g.tanh(c_next)?;
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Runs over `seq` in the given direction. Rows past their length keep
    /// their state, so the reverse pass starts at each row's last token.
    /// Returned steps are unmasked hidden states.
    fn run(&self, g: &mut Graph, store: &ParamStore, seq: &Seq, reverse: bool) -> Result<Vec<Var>> {
        let zeros = Tensor::zeros(&[seq.batch(), self.hidden_dim]);
        let mut h = g.constant(zeros.clone());
        let mut c = g.constant(zeros);
        let mut out = vec![h; seq.max_len()];
        let order: Vec<usize> = if reverse {
            (0..seq.max_len()).rev().collect()
        } else {
            (0..seq.max_len()).collect()
        };
        for t in order {
            let (hn, cn) = self.step(g, store, seq.steps[t], h, c)?;
            if seq.fully_valid(t) {
                h = hn;
                c = cn;
            } else {
                let keep = seq.mask(t).clone();
                h = g.where_rows(keep.clone(), hn, h)?;
                c = g.where_rows(keep, cn, c)?;
            }
            out[t] = h;
        }
        Ok(out)
    }
}

/// Forward and backward LSTM whose outputs are concatenated per position.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        Ok(Self {
            fwd: Lstm::new(store, &format!("{prefix}.fwd"), input_dim, hidden_dim)?,
            bwd: Lstm::new(store, &format!("{prefix}.bwd"), input_dim, hidden_dim)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim
    }

    /// `2·hidden` outputs per position; padded positions are zero.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: &Seq) -> Result<Seq> {
        if seq.max_len() == 0 {
            return dim_err("BiLSTM over an empty sequence");
        }
        let f = self.fwd.run(g, store, seq, false)?;
        let b = self.bwd.run(g, store, seq, true)?;
        let mut steps = Vec::with_capacity(seq.max_len());
        for t in 0..seq.max_len() {
            let both = g.concat(&[f[t], b[t]], 1)?;
            let step = if seq.fully_valid(t) {
                both
            } else {
                let keep: Rc<[bool]> = seq.mask(t).clone();
                g.mask_rows(both, keep)?
            };
            steps.push(step);
        }
        Ok(seq.with_steps(steps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn seq_of(g: &mut Graph, xs: &[Tensor], lengths: Vec<usize>) -> Seq {
        let steps = xs.iter().map(|x| g.constant(x.clone())).collect();
        Seq::new(steps, lengths.into()).unwrap()
    }

    #[test]
    fn zero_cell_stays_at_zero() {
        let mut store = ParamStore::new(0);
        let cell = Lstm::new(&mut store, "l", 3, 2).unwrap();
        for p in store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(random_rows(1, 3, 1));
        let h = g.constant(Tensor::zeros(&[1, 2]));
        let c = g.constant(Tensor::zeros(&[1, 2]));
        let (h2, c2) = cell.step(&mut g, &store, x, h, c).unwrap();
        assert_eq!(g.value(h2).data(), &[0.0, 0.0]);
        assert_eq!(g.value(c2).data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let mut store = ParamStore::new(0);
        let cell = Lstm::new(&mut store, "l", 2, 1).unwrap();
        store.get_mut(cell.weight).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        // i, f, g, o biases: f saturated, candidate zero
        store.get_mut(cell.bias).value = Tensor::vector(vec![0.0, 50.0, 0.0, 0.0]);
        let mut g = Graph::new();
        let x = g.constant(random_rows(1, 2, 2));
        let h = g.constant(Tensor::zeros(&[1, 1]));
        let c = g.constant(Tensor::filled(&[1, 1], 1.0));
        let (_, c2) = cell.step(&mut g, &store, x, h, c).unwrap();
        assert!((g.value(c2).data()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cell_rejects_wrong_width() {
        let mut store = ParamStore::new(0);
        let cell = Lstm::new(&mut store, "l", 3, 2).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 4]));
        let h = g.constant(Tensor::zeros(&[1, 2]));
        assert!(cell.step(&mut g, &store, x, h, h).is_err());
    }

    #[test]
    fn cell_gradient_check() {
        let mut store = ParamStore::new(3);
        let cell = Lstm::new(&mut store, "l", 3, 2).unwrap();
        let x = random_rows(2, 3, 4);
        let h0 = random_rows(2, 2, 5);
        let c0 = random_rows(2, 2, 6);
        let w = random_rows(2, 2, 7);
        let rep = check_params(&store, 1e-5, 200, 0, |g, s| {
            let x = g.constant(x.clone());
            let h = g.constant(h0.clone());
            let c = g.constant(c0.clone());
            let (h2, c2) = cell.step(g, s, x, h, c)?;
            let wv = g.constant(w.clone());
            let p = g.mul(h2, wv)?;
            let a = g.sum_all(p)?;
            let b = g.sum_all(c2)?;
            g.add(a, b)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    }

    #[test]
    fn length_one_is_one_step_each_way() {
        let mut store = ParamStore::new(9);
        let bi = BiLstm::new(&mut store, "bi", 3, 2).unwrap();
        let x = random_rows(1, 3, 10);
        let mut g = Graph::new();
        let seq = seq_of(&mut g, &[x.clone()], vec![1]);
        let out = bi.forward(&mut g, &store, &seq).unwrap();
        let zeros = g.constant(Tensor::zeros(&[1, 2]));
        let xv = seq.steps[0];
        let (hf, _) = bi.fwd.step(&mut g, &store, xv, zeros, zeros).unwrap();
        let (hb, _) = bi.bwd.step(&mut g, &store, xv, zeros, zeros).unwrap();
        let mut expect = g.value(hf).data().to_vec();
        expect.extend_from_slice(g.value(hb).data());
        assert_eq!(g.value(out.steps[0]).data(), expect.as_slice());
    }

    #[test]
    fn palindrome_with_tied_directions_mirrors() {
        let mut store = ParamStore::new(11);
        let bi = BiLstm::new(&mut store, "bi", 2, 3).unwrap();
        let (fw, fb) = (store.get(bi.fwd.weight).value.clone(), store.get(bi.fwd.bias).value.clone());
        store.get_mut(bi.bwd.weight).value = fw;
        store.get_mut(bi.bwd.bias).value = fb;
        let a = random_rows(1, 2, 12);
        let b = random_rows(1, 2, 13);
        let xs = [a.clone(), b, a];
        let mut g = Graph::new();
        let seq = seq_of(&mut g, &xs, vec![3]);
        let out = bi.forward(&mut g, &store, &seq).unwrap();
        for i in 0..3 {
            let first = &g.value(out.steps[i]).data()[..3];
            let second = &g.value(out.steps[2 - i]).data()[3..];
            assert_eq!(first, second);
        }
    }

    #[test]
    fn padding_is_inert() {
        let mut store = ParamStore::new(14);
        let bi = BiLstm::new(&mut store, "bi", 2, 2).unwrap();
        let xs: Vec<Tensor> = (0..4).map(|t| random_rows(2, 2, 20 + t)).collect();
        let mut perturbed = xs.clone();
        // row 1 has length 2; scribble over its padded tail
        for t in 2..4 {
            perturbed[t].data_mut()[2] = 9.0;
            perturbed[t].data_mut()[3] = -7.0;
        }
        let run = |xs: &[Tensor]| {
            let mut g = Graph::new();
            let seq = seq_of(&mut g, xs, vec![4, 2]);
            let out = bi.forward(&mut g, &store, &seq).unwrap();
            let pooled = out.pool_mean_max(&mut g).unwrap();
            let loss = g.sum_all(pooled).unwrap();
            g.backward(loss).unwrap();
            let outs: Vec<Tensor> = out.steps.iter().map(|s| g.value(*s).clone()).collect();
            let grads: Vec<Tensor> = [bi.fwd.weight, bi.bwd.weight]
                .iter()
                .map(|id| g.grad_tensor(g.param_var(*id).unwrap()))
                .collect();
            (outs, grads)
        };
        let (o1, g1) = run(&xs);
        let (o2, g2) = run(&perturbed);
        assert_eq!(o1, o2);
        assert_eq!(g1, g2);
        for t in 2..4 {
            assert_eq!(&o1[t].data()[4..], &[0.0; 4]);
        }
    }

    #[test]
    fn directions_are_independent() {
        let mut store = ParamStore::new(15);
        let bi = BiLstm::new(&mut store, "bi", 2, 2).unwrap();
        let xs: Vec<Tensor> = (0..3).map(|t| random_rows(1, 2, 30 + t)).collect();
        let outputs = |store: &ParamStore| {
            let mut g = Graph::new();
            let seq = seq_of(&mut g, &xs, vec![3]);
            let out = bi.forward(&mut g, store, &seq).unwrap();
            out.steps.iter().map(|s| g.value(*s).data().to_vec()).collect::<Vec<_>>()
        };
        let before = outputs(&store);
        let mut changed = store.clone();
        changed.get_mut(bi.bwd.weight).value.data_mut()[0] += 0.5;
        let after = outputs(&changed);
        for (b, a) in before.iter().zip(&after) {
            assert_eq!(&b[..2], &a[..2]);
            assert_ne!(&b[2..], &a[2..]);
        }
    }

    #[test]
    fn bilstm_gradient_check() {
        let mut store = ParamStore::new(16);
        let bi = BiLstm::new(&mut store, "bi", 2, 2).unwrap();
        let xs: Vec<Tensor> = (0..4).map(|t| random_rows(2, 2, 40 + t)).collect();
        let w = random_rows(2, 4, 50);
        let rep = check_params(&store, 1e-5, 200, 1, |g, s| {
            let seq = seq_of(g, &xs, vec![4, 3]);
            let out = bi.forward(g, s, &seq)?;
            let mut terms = Vec::new();
            for st in &out.steps {
                let wv = g.constant(w.clone());
                let p = g.mul(*st, wv)?;
                terms.push(g.sum_all(p)?);
            }
            let mut acc = terms[0];
            for t in &terms[1..] {
                acc = g.add(acc, *t)?;
            }
            Ok(acc)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    }

    #[test]
    fn length_beyond_steps_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 2]));
        assert!(Seq::new(vec![x], vec![2].into()).is_err());
    }
}
