use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_inputs;
use super::*;
use crate::error::Error;

const EPS: f64 = 1e-5;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random weighting so vector outputs reduce to a non-trivial scalar.
fn weighted_sum(g: &mut Graph, x: Var, seed: u64) -> crate::Result<Var> {
    let w = g.constant(random(g.shape(x), seed));
    let p = g.mul(x, w)?;
    g.sum_all(p)
}

#[test]
fn matmul_identity_and_orthogonal() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let i = g.constant(Tensor::identity(2));
    let out = g.matmul(a, i).unwrap();
    assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let r = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
    let c = g.constant(Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap());
    let out = g.matmul(r, c).unwrap();
    assert_eq!(g.value(out).data(), &[0.0]);
    assert_eq!(g.shape(out), &[1, 1]);
}

#[test]
fn matmul_rejects_inner_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let inputs = [random(&[3, 4], 1), random(&[4, 2], 2)];
    let rep = check_inputs(&inputs, EPS, |g, v| {
        let m = g.matmul(v[0], v[1])?;
        g.sum_all(m)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(z).unwrap();
    let t = g.tanh(z).unwrap();
    assert_eq!(g.scalar_value(s), 0.5);
    assert_eq!(g.scalar_value(t), 0.0);

    let a = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let b = g.constant(Tensor::vector(vec![4.0, 5.0, 6.0]));
    let m = g.mul(a, b).unwrap();
    assert_eq!(g.value(m).data(), &[4.0, 10.0, 18.0]);

    let rep = check_inputs(
        &[Tensor::vector(vec![1.0, 2.0, 3.0]), Tensor::vector(vec![4.0, 5.0, 6.0])],
        EPS,
        |g, v| {
            let m = g.mul(v[0], v[1])?;
            weighted_sum(g, m, 9)
        },
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn elementwise_errors() {
    let mut g = Graph::new();
    let bad = g.constant(Tensor::vector(vec![1.0, 0.0]));
    assert!(matches!(g.log(bad), Err(Error::Domain(_))));
    let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
    // scalar ⊗ tensor is the one permitted broadcast
    let s = g.constant(Tensor::scalar(2.0));
    let m = g.mul(s, b).unwrap();
    assert_eq!(g.value(m).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn every_unary_and_binary_passes_gradient_check() {
    let pos = Tensor::vector(vec![0.3, 1.7, 0.9, 2.4]);
    for op in [Unary::Sigmoid, Unary::Tanh, Unary::Exp, Unary::Log, Unary::Negate] {
        let rep = check_inputs(&[pos.clone()], EPS, |g, v| {
            let y = g.unary(op, v[0])?;
            weighted_sum(g, y, 3)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{op:?}: {rep:?}");
    }
    for op in [Binary::Add, Binary::Sub, Binary::Mul] {
        let rep = check_inputs(&[random(&[2, 3], 4), Tensor::scalar(0.7)], EPS, |g, v| {
            let y = g.binary(op, v[0], v[1])?;
            weighted_sum(g, y, 5)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{op:?}: {rep:?}");
    }
}

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let s = g.softmax(x).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);

    let x = g.constant(Tensor::vector(vec![1000.0, 1000.0]));
    let s = g.softmax(x).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);

    // direct e^z / Σ e^z without the max shift
    let z = [1.0f64, 2.0, 3.0];
    let denom: f64 = z.iter().map(|v| v.exp()).sum();
    let x = g.constant(Tensor::vector(z.to_vec()));
    let s = g.softmax(x).unwrap();
    for (got, zi) in g.value(s).data().iter().zip(z) {
        assert!((got - zi.exp() / denom).abs() < 1e-12);
    }
    let total: f64 = g.value(s).data().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);

    let empty = g.constant(Tensor::vector(vec![]));
    assert!(matches!(g.softmax(empty), Err(Error::Dimension(_))));
}

#[test]
fn softmax_gradient_check() {
    let rep = check_inputs(&[random(&[3, 5], 11)], EPS, |g, v| {
        let s = g.softmax(v[0])?;
        weighted_sum(g, s, 12)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn concat_examples_and_slice_routing() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = g.constant(Tensor::vector(vec![3.0]));
    let c = g.concat(&[a, b], 0).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);
    let single = g.concat(&[a], 0).unwrap();
    assert_eq!(g.value(single), g.value(a));

    // Upstream gradient [1..6] must land on the parts as [1,2], [3,4], [5,6].
    let mut g = Graph::new();
    let parts: Vec<Var> = (0..3).map(|k| g.leaf(random(&[2], k))).collect();
    let cat = g.concat(&parts, 0).unwrap();
    let up = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let prod = g.mul(cat, up).unwrap();
    let loss = g.sum_all(prod).unwrap();
    g.backward(loss).unwrap();
    for (k, p) in parts.iter().enumerate() {
        let expect = [2.0 * k as f64 + 1.0, 2.0 * k as f64 + 2.0];
        assert_eq!(g.grad(*p).unwrap(), &expect);
    }

    let x = g.constant(Tensor::zeros(&[2, 3]));
    let y = g.constant(Tensor::zeros(&[3, 3]));
    assert!(matches!(g.concat(&[x, y], 1), Err(Error::Dimension(_))));
}

#[test]
fn concat_columns_and_slice_gradient_check() {
    let inputs = [random(&[2, 3], 21), random(&[2, 2], 22)];
    let rep = check_inputs(&inputs, EPS, |g, v| {
        let c = g.concat(&[v[0], v[1]], 1)?;
        let s = g.slice(c, 1, 1, 3)?;
        let t = g.tanh(s)?;
        weighted_sum(g, t, 23)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn reduce_examples() {
    let mut g = Graph::new();
    for c in [-2.5, 0.0, 7.0] {
        let x = g.constant(Tensor::vector(vec![c; 3]));
        let m = g.reduce(ReduceKind::Mean, x, 0).unwrap();
        assert_eq!(g.scalar_value(m), c);
    }
    let x = g.leaf(Tensor::vector(vec![1.0, 5.0, 3.0]));
    let m = g.reduce(ReduceKind::Max, x, 0).unwrap();
    assert_eq!(g.scalar_value(m), 5.0);
    g.backward(m).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 0.0]);

    // ties go to the first index
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![2.0, 2.0]));
    let m = g.reduce(ReduceKind::Max, x, 0).unwrap();
    g.backward(m).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0]);

    let e = g.constant(Tensor::zeros(&[0, 3]));
    assert!(matches!(g.reduce(ReduceKind::Mean, e, 0), Err(Error::Dimension(_))));
}

#[test]
fn reduce_gradient_check() {
    for kind in [ReduceKind::Mean, ReduceKind::Max, ReduceKind::Sum] {
        for axis in [0, 1] {
            let rep = check_inputs(&[random(&[4, 3], 31)], EPS, |g, v| {
                let r = g.reduce(kind, v[0], axis)?;
                weighted_sum(g, r, 32)
            })
            .unwrap();
            assert!(rep.max_rel_error < 1e-4, "{kind:?}/{axis}: {rep:?}");
        }
    }
}

#[test]
fn frobenius_examples() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::zeros(&[2, 2]));
    let f = g.frobenius_sq(z).unwrap();
    assert_eq!(g.scalar_value(f), 0.0);
    let e = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap());
    let f = g.frobenius_sq(e).unwrap();
    assert_eq!(g.scalar_value(f), 1.0);

    // trace(aᵀa) = Σ_j Σ_i a_ij a_ij, accumulated column by column
    let a = random(&[3, 3], 41);
    let mut trace = 0.0;
    for j in 0..3 {
        for i in 0..3 {
            trace += a.get2(i, j) * a.get2(i, j);
        }
    }
    let x = g.leaf(a.clone());
    let f = g.frobenius_sq(x).unwrap();
    assert!((g.scalar_value(f) - trace).abs() < 1e-12);
    g.backward(f).unwrap();
    for (gr, v) in g.grad(x).unwrap().iter().zip(a.data()) {
        assert_eq!(*gr, 2.0 * v);
    }
}

#[test]
fn grad_reverse_examples() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0));
    let r = g.grad_reverse(x, 0.05).unwrap();
    assert_eq!(g.scalar_value(r), 2.0);
    g.backward(r).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[-0.05]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0));
    let r = g.grad_reverse(x, 0.0).unwrap();
    g.backward(r).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0]);
    assert!(g.grad_reverse(x, -1.0).is_err());
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.leaf(random(&[2, 3], 51));
    let s = g.sum_all(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    // a second call accumulates
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0; 6]);

    let mut g = Graph::new();
    let v = g.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(v), Err(Error::Contract(_))));
}

#[test]
fn cross_entropy_matches_softmax_minus_onehot() {
    let logits = random(&[2, 4], 61);
    let mut g = Graph::new();
    let l = g.leaf(logits.clone());
    let ce = g.cross_entropy(l, &[Some(1), Some(3)], None, 1.0).unwrap();
    g.backward(ce).unwrap();
    let grad = g.grad(l).unwrap();
    for r in 0..2 {
        let row = logits.row(r);
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        let target = [1, 3][r];
        for c in 0..4 {
            let expect = row[c].exp() / denom - if c == target { 1.0 } else { 0.0 };
            assert!((grad[r * 4 + c] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn masked_cross_entropy_gradient_check() {
    let mask: Rc<[bool]> = Rc::from(vec![true, false, true, true, true, true, false, true]);
    let rep = check_inputs(&[random(&[2, 4], 62)], EPS, |g, v| {
        g.cross_entropy(v[0], &[Some(2), Some(0)], Some(mask.clone()), 0.5)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    let mut g = Graph::new();
    let l = g.leaf(random(&[2, 4], 62));
    assert!(g.cross_entropy(l, &[Some(1), None], Some(mask), 1.0).is_err());
}

#[test]
fn sequence_ops_gradient_check() {
    let lengths: Rc<[usize]> = Rc::from(vec![3, 1, 2]);
    let inputs: Vec<Tensor> = (0..3).map(|t| random(&[3, 2], 70 + t)).collect();
    for kind in [PoolKind::Mean, PoolKind::Max] {
        let lengths = lengths.clone();
        let rep = check_inputs(&inputs, EPS, move |g, v| {
            let p = g.pool_time(v, lengths.clone(), kind)?;
            weighted_sum(g, p, 80)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{kind:?}: {rep:?}");
    }
    let rep = check_inputs(&inputs, EPS, |g, v| {
        let a = g.stack_row(v, 0, 3)?;
        let b = g.stack_row(v, 2, 2)?;
        let t0 = g.time_step(&[a, b], 1)?;
        let t2 = g.time_step(&[a, b], 2)?;
        let keep: Rc<[bool]> = Rc::from(vec![true, false]);
        let w = g.where_rows(keep.clone(), t0, t2)?;
        let m = g.mask_rows(w, keep)?;
        let s = g.sigmoid(m)?;
        weighted_sum(g, s, 81)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn gather_accumulates_repeated_rows() {
    let mut g = Graph::new();
    let table = g.leaf(random(&[4, 2], 90));
    let rows = g.gather(table, &[2, 2, 0]).unwrap();
    let s = g.sum_all(rows).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    assert!(matches!(g.gather(table, &[4]), Err(Error::Index(_))));
}

#[test]
fn identical_op_sequences_are_bit_identical() {
    let run = || {
        let mut g = Graph::new();
        let a = g.leaf(random(&[3, 4], 5));
        let b = g.leaf(random(&[4, 2], 6));
        let m = g.matmul(a, b).unwrap();
        let t = g.tanh(m).unwrap();
        let s = g.softmax(t).unwrap();
        let l = weighted_sum(&mut g, s, 7).unwrap();
        g.backward(l).unwrap();
        (g.scalar_value(l).to_bits(), g.grad_tensor(a), g.grad_tensor(b))
    };
    let (l1, a1, b1) = run();
    let (l2, a2, b2) = run();
    assert_eq!(l1, l2);
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composite_functions_pass_gradient_check(seed in 0u64..10_000, rows in 1usize..4, inner in 1usize..5, cols in 1usize..4) {
        let inputs = [random(&[rows, inner], seed), random(&[inner, cols], seed + 1), random(&[cols], seed + 2)];
        let rep = check_inputs(&inputs, EPS, |g, v| {
            let h = g.affine(v[0], v[1], v[2])?;
            let t = g.tanh(h)?;
            let s = g.softmax(t)?;
            let e = g.sigmoid(h)?;
            let p = g.mul(s, e)?;
            let r = g.reduce(ReduceKind::Max, p, 1)?;
            let f = g.frobenius_sq(h)?;
            let a = weighted_sum(g, r, seed + 3)?;
            g.add(a, f)
        }).unwrap();
        prop_assert!(rep.max_rel_error < 1e-3, "{:?}", rep);
    }

    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vals));
        let s = g.softmax(x).unwrap();
        let out = g.value(s).data();
        prop_assert!(out.iter().all(|&p| p >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
