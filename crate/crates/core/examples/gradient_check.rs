//! Compares tape gradients with central finite differences, first for a
//! hand-built expression, then for every weight of a small BiLSTM.

use std::rc::Rc;

use mtl_core::autodiff::gradcheck::{check_inputs, check_params};
use mtl_core::autodiff::{Graph, Tensor};
use mtl_core::nn::{BiLstm, Seq};
use mtl_core::params::ParamStore;

fn main() -> mtl_core::Result<()> {
    let x = Tensor::matrix(2, 3, vec![0.3, -0.1, 0.8, 0.5, 0.2, -0.7])?;
    let w = Tensor::matrix(3, 2, vec![0.1, 0.4, -0.3, 0.2, 0.6, -0.5])?;
    let r = check_inputs(&[x, w], 1e-6, |g, v| {
        let h = g.matmul(v[0], v[1])?;
        let h = g.tanh(h)?;
        g.sum_all(h)
    })?;
    println!("tanh(xW): {} entries, max rel error {:.2e}", r.checked, r.max_rel_error);

    let mut store = ParamStore::new(7);
    let lstm = BiLstm::new(&mut store, "enc", 3, 4)?;
    let steps: Vec<Tensor> = (0..4)
        .map(|t| Tensor::matrix(2, 3, (0..6).map(|i| ((t * 6 + i) as f64 * 0.37).sin()).collect()))
        .collect::<Result<_, _>>()?;
    let lengths: Rc<[usize]> = Rc::from(vec![4, 2]);
    let r = check_params(&store, 1e-5, usize::MAX, 1, |g: &mut Graph, s| {
        let seq = Seq::new(steps.iter().map(|t| g.constant(t.clone())).collect(), lengths.clone())?;
        let out = lstm.forward(g, s, &seq)?;
        let pooled = out.pool_mean_max(g)?;
        g.sum_all(pooled)
    })?;
    println!(
        "bilstm: {} parameters, {} checked, max rel error {:.2e}",
        store.num_scalars(),
        r.checked,
        r.max_rel_error
    );
    Ok(())
}
