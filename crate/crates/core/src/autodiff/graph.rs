use std::collections::HashMap;
use std::rc::Rc;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, transpose_raw, Tensor};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::params::{ParamId, ParamStore};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Negate,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Max,
    Sum,
}

/// Which pooling to apply across the time steps of a masked sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    AddRowBias(Var, Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reduce {
        x: Var,
        kind: ReduceKind,
        axis: usize,
        argmax: Vec<usize>,
    },
    SumAll(Var),
    Softmax(Var),
    FrobeniusSq(Var),
    GradReverse(Var, f64),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        scale: f64,
        probs: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MaskRows {
        x: Var,
        keep: Rc<[bool]>,
    },
    WhereRows {
        keep: Rc<[bool]>,
        a: Var,
        b: Var,
    },
    PoolTime {
        steps: Vec<Var>,
        lengths: Rc<[usize]>,
        kind: PoolKind,
        argmax: Vec<usize>,
    },
    StackRow {
        steps: Vec<Var>,
        row: usize,
    },
    TimeStep {
        mats: Vec<Var>,
        t: usize,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in execution order, so every operand precedes its
/// result. A graph is built fresh for every forward pass and dropped (or
/// [`clear`](Graph::clear)ed) afterwards.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    permissive: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that lets non-finite values through instead of failing at
    /// the op that produced them.
    pub fn permissive() -> Self {
        Self {
            permissive: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Accumulated gradient, `None` when nothing reached the node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient as a tensor of the node's shape (zeros if untouched).
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone())
                .expect("grad shape tracks value shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Non-trainable leaf (data, masks, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter as a leaf. Repeated calls return the same
    /// node, so every use of a parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push_leaf(p.value.clone(), p.trainable);
        self.params.insert(id, v);
        v
    }

    /// Parameters bound on this graph, with their nodes.
    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(&id, &v)| (id, v))
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        if !self.permissive && !value.all_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    // ---- elementwise ----------------------------------------------------

    pub fn unary(&mut self, op: Unary, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if op == Unary::Log {
            if let Some(bad) = xv.data().iter().find(|&&v| v <= 0.0) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
        }
        let f: fn(f64) -> f64 = match op {
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Negate => |v| -v,
            Unary::Abs => f64::abs,
        };
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Unary(op, x), &[x], unary_name(op))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Log, x)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Abs, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Negate, x)
    }

    /// Equal shapes, or one side a rank-0 scalar.
    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let f: fn(f64, f64) -> f64 = match op {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let out = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if bv.is_scalar() {
            let y = bv.data()[0];
            let data = av.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if av.is_scalar() {
            let x = av.data()[0];
            let data = bv.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(bv.shape().to_vec(), data)?
        } else {
            return dim_err(format!(
                "{op:?} of shapes {:?} and {:?}",
                av.shape(),
                bv.shape()
            ));
        };
        self.push(out, Op::Binary(op, a, b), &[a, b], "elementwise")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| v * k).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Scale(x, k), &[x], "scale")
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        if av.rank() != 2 || bv.rank() != 2 {
            return dim_err(format!(
                "matmul needs matrices, got {:?} × {:?}",
                av.shape(),
                bv.shape()
            ));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        if k != k2 {
            return dim_err(format!("matmul inner dims {k} vs {k2}"));
        }
        let out = Tensor::new(vec![m, n], matmul_raw(av.data(), bv.data(), m, k, n))?;
        self.push(out, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.rank() != 2 {
            return dim_err("transpose needs a matrix");
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let out = Tensor::new(vec![c, r], transpose_raw(xv.data(), r, c))?;
        self.push(out, Op::Transpose(x), &[x], "transpose")
    }

    /// Adds the row vector `bias` (`[n]` or `[1, n]`) to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[bias.0].value;
        let (rows, cols) = xv.dims2()?;
        let (br, bc) = bv.dims2()?;
        if br != 1 || bc != cols {
            return dim_err(format!(
                "bias {:?} does not fit rows of {:?}",
                bv.shape(),
                xv.shape()
            ));
        }
        let b = bv.data();
        let mut data = xv.data().to_vec();
        for r in 0..rows {
            for (o, &bb) in data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o += bb;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::AddRowBias(x, bias), &[x, bias], "add_row_bias")
    }

    /// `x · w + b`, the affine map used by every dense layer.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    // ---- structure ------------------------------------------------------

    /// Concatenates along `axis`. Rank-1 parts only support axis 0.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat of zero parts");
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        let rank = first.len();
        if rank == 0 || rank > 2 || axis >= rank {
            return dim_err(format!("concat axis {axis} on shape {first:?}"));
        }
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            let ok = s.len() == rank && (0..rank).all(|d| d == axis || s[d] == first[d]);
            if !ok {
                return dim_err(format!("concat parts {first:?} and {s:?} on axis {axis}"));
            }
        }
        let out = if rank == 1 || axis == 0 {
            let mut data = Vec::new();
            let mut len = 0;
            for p in parts {
                let v = &self.nodes[p.0].value;
                data.extend_from_slice(v.data());
                len += v.shape()[0];
            }
            let mut shape = first.clone();
            shape[0] = len;
            Tensor::new(shape, data)?
        } else {
            let rows = first[0];
            let widths: Vec<usize> = parts
                .iter()
                .map(|p| self.nodes[p.0].value.shape()[1])
                .collect();
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (p, &w) in parts.iter().zip(&widths) {
                    let v = self.nodes[p.0].value.data();
                    data.extend_from_slice(&v[r * w..(r + 1) * w]);
                }
            }
            Tensor::new(vec![rows, total], data)?
        };
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        self.push(out, op, parts, "concat")
    }

    /// Contiguous `len`-wide slice along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let shape = xv.shape().to_vec();
        if axis >= shape.len() || shape.len() > 2 || start + len > shape[axis] {
            return dim_err(format!("slice {start}+{len} on axis {axis} of {shape:?}"));
        }
        let out = if shape.len() == 1 {
            Tensor::vector(xv.data()[start..start + len].to_vec())
        } else if axis == 0 {
            let c = shape[1];
            Tensor::new(vec![len, c], xv.data()[start * c..(start + len) * c].to_vec())?
        } else {
            let (r, c) = (shape[0], shape[1]);
            let mut data = Vec::with_capacity(r * len);
            for row in 0..r {
                data.extend_from_slice(&xv.data()[row * c + start..row * c + start + len]);
            }
            Tensor::new(vec![r, len], data)?
        };
        self.push(out, Op::Slice { x, axis, start }, &[x], "slice")
    }

    // ---- reductions -----------------------------------------------------

    /// Mean, max or sum along `axis`. The reduced axis is dropped, so a
    /// matrix reduces to a vector and a vector to a scalar.
    pub fn reduce(&mut self, kind: ReduceKind, x: Var, axis: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let shape = xv.shape().to_vec();
        let (rows, cols, out_shape) = match (shape.as_slice(), axis) {
            ([n], 0) => (1, *n, vec![]),
            ([r, c], 0) => (*r, *c, vec![*c]),
            ([r, c], 1) => (*r, *c, vec![*r]),
            _ => return dim_err(format!("reduce axis {axis} on {shape:?}")),
        };
        // For a vector we reduce across its only axis, i.e. across "columns".
        let along_rows = shape.len() == 2 && axis == 0;
        let extent = if along_rows { rows } else { cols };
        if extent == 0 {
            return dim_err("reduce over an empty axis");
        }
        let outer = if along_rows { cols } else { rows };
        let at = |o: usize, i: usize| {
            if along_rows {
                xv.data()[i * cols + o]
            } else {
                xv.data()[o * cols + i]
            }
        };
        let mut data = Vec::with_capacity(outer);
        let mut argmax = Vec::new();
        for o in 0..outer {
            match kind {
                ReduceKind::Sum | ReduceKind::Mean => {
                    let s: f64 = (0..extent).map(|i| at(o, i)).sum();
                    data.push(if kind == ReduceKind::Mean { s / extent as f64 } else { s });
                }
                ReduceKind::Max => {
                    let mut best = 0;
                    for i in 1..extent {
                        if at(o, i) > at(o, best) {
                            best = i;
                        }
                    }
                    argmax.push(best);
                    data.push(at(o, best));
                }
            }
        }
        let out = Tensor::new(out_shape, data)?;
        let op = Op::Reduce {
            x,
            kind,
            axis,
            argmax,
        };
        self.push(out, op, &[x], "reduce")
    }

    /// Sum of every entry, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x], "sum_all")
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.nodes[x.0].value.numel();
        if n == 0 {
            return dim_err("mean of empty tensor");
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = xv.dims2()?;
        if cols == 0 || xv.is_scalar() {
            return dim_err("softmax over an empty axis");
        }
        let mut data = xv.data().to_vec();
        for r in 0..rows {
            softmax_in_place(&mut data[r * cols..(r + 1) * cols], None);
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Softmax(x), &[x], "softmax")
    }

    /// Sum of squared entries of a matrix.
    pub fn frobenius_sq(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.rank() != 2 {
            return dim_err(format!("frobenius norm of shape {:?}", xv.shape()));
        }
        let s = xv.data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::FrobeniusSq(x), &[x], "frobenius_sq")
    }

    /// Identity forward; backward multiplies the upstream gradient by `-lambda`.
    pub fn grad_reverse(&mut self, x: Var, lambda: f64) -> Result<Var> {
        if !(lambda >= 0.0) {
            return contract_err(format!("gradient reversal weight {lambda} < 0"));
        }
        let out = self.nodes[x.0].value.clone();
        self.push(out, Op::GradReverse(x, lambda), &[x], "grad_reverse")
    }

    /// Summed softmax cross-entropy over the rows of `logits`, times `scale`.
    ///
    /// Rows with a `None` target are skipped. When `allowed` is given (same
    /// length as `logits`), the softmax of each row runs only over the
    /// allowed entries; the target must be one of them.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        allowed: Option<Rc<[bool]>>,
        scale: f64,
    ) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        let (rows, cols) = lv.dims2()?;
        if targets.len() != rows {
            return dim_err(format!("{} targets for {rows} rows", targets.len()));
        }
        if let Some(mask) = &allowed {
            if mask.len() != rows * cols {
                return dim_err("candidate mask does not match logits");
            }
        }
        let mut probs = lv.data().to_vec();
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            let row_mask = allowed.as_ref().map(|m| &m[r * cols..(r + 1) * cols]);
            let row = &mut probs[r * cols..(r + 1) * cols];
            let Some(t) = *t else {
                row.iter_mut().for_each(|p| *p = 0.0);
                continue;
            };
            if t >= cols {
                return Err(Error::Contract(format!("target {t} outside {cols} classes")));
            }
            if row_mask.is_some_and(|m| !m[t]) {
                return Err(Error::Contract(format!("target {t} is not a candidate")));
            }
            let logsum = softmax_in_place(row, row_mask);
            loss -= lv.data()[r * cols + t] - logsum;
        }
        let out = Tensor::scalar(loss * scale);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            scale,
            probs,
        };
        self.push(out, op, &[logits], "cross_entropy")
    }

    // ---- sequence helpers -----------------------------------------------

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = &self.nodes[table.0].value;
        if tv.rank() != 2 {
            return dim_err("gather from a non-matrix");
        }
        let (n, d) = (tv.shape()[0], tv.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= n {
                return Err(Error::Index(format!("id {id} outside table of {n} rows")));
            }
            data.extend_from_slice(tv.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let op = Op::Gather {
            table,
            ids: ids.to_vec(),
        };
        self.push(out, op, &[table], "gather")
    }

    /// Zeroes the rows of a matrix whose `keep` flag is false.
    pub fn mask_rows(&mut self, x: Var, keep: Rc<[bool]>) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = xv.dims2()?;
        if keep.len() != rows {
            return dim_err("row mask length");
        }
        let mut data = xv.data().to_vec();
        for r in (0..rows).filter(|&r| !keep[r]) {
            data[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::MaskRows { x, keep }, &[x], "mask_rows")
    }

    /// Row `r` taken from `a` where `keep[r]`, otherwise from `b`.
    pub fn where_rows(&mut self, keep: Rc<[bool]>, a: Var, b: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        if av.shape() != bv.shape() {
            return dim_err("where_rows operands differ in shape");
        }
        let (rows, cols) = av.dims2()?;
        if keep.len() != rows {
            return dim_err("row mask length");
        }
        let mut data = bv.data().to_vec();
        for r in (0..rows).filter(|&r| keep[r]) {
            data[r * cols..(r + 1) * cols].copy_from_slice(&av.data()[r * cols..(r + 1) * cols]);
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(out, Op::WhereRows { keep, a, b }, &[a, b], "where_rows")
    }

    /// Pools a time-major sequence (`steps[t]` is `batch × d`) over the first
    /// `lengths[r]` steps of each row. Max ties resolve to the earliest step.
    pub fn pool_time(&mut self, steps: &[Var], lengths: Rc<[usize]>, kind: PoolKind) -> Result<Var> {
        let Some(first) = steps.first() else {
            return dim_err("pooling an empty sequence");
        };
        let (rows, cols) = self.nodes[first.0].value.dims2()?;
        if lengths.len() != rows {
            return dim_err("lengths do not match batch");
        }
        for &l in lengths.iter() {
            if l == 0 || l > steps.len() {
                return contract_err(format!("pooling length {l} with {} steps", steps.len()));
            }
        }
        let mut data = vec![0.0; rows * cols];
        let mut argmax = Vec::new();
        if kind == PoolKind::Max {
            argmax = vec![0; rows * cols];
        }
        for r in 0..rows {
            let len = lengths[r];
            for c in 0..cols {
                let at = |t: usize| self.nodes[steps[t].0].value.data()[r * cols + c];
                match kind {
                    PoolKind::Mean => {
                        let s: f64 = (0..len).map(at).sum();
                        data[r * cols + c] = s / len as f64;
                    }
                    PoolKind::Max => {
                        let mut best = 0;
                        for t in 1..len {
                            if at(t) > at(best) {
                                best = t;
                            }
                        }
                        argmax[r * cols + c] = best;
                        data[r * cols + c] = at(best);
                    }
                }
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let op = Op::PoolTime {
            steps: steps.to_vec(),
            lengths,
            kind,
            argmax,
        };
        self.push(out, op, steps, "pool_time")
    }

    /// Row `row` of the first `len` steps stacked into a `len × d` matrix.
    pub fn stack_row(&mut self, steps: &[Var], row: usize, len: usize) -> Result<Var> {
        if len == 0 || len > steps.len() {
            return contract_err(format!("stacking {len} of {} steps", steps.len()));
        }
        let (rows, cols) = self.nodes[steps[0].0].value.dims2()?;
        if row >= rows {
            return Err(Error::Index(format!("row {row} of {rows}")));
        }
        let mut data = Vec::with_capacity(len * cols);
        for s in &steps[..len] {
            data.extend_from_slice(self.nodes[s.0].value.row(row));
        }
        let out = Tensor::new(vec![len, cols], data)?;
        let op = Op::StackRow {
            steps: steps[..len].to_vec(),
            row,
        };
        self.push(out, op, &steps[..len], "stack_row")
    }

    /// Inverse of [`stack_row`](Graph::stack_row): row `r` of the result is
    /// row `t` of `mats[r]`, or zeros when `mats[r]` is shorter than `t + 1`.
    pub fn time_step(&mut self, mats: &[Var], t: usize) -> Result<Var> {
        let Some(first) = mats.first() else {
            return dim_err("time_step over no sequences");
        };
        let cols = self.nodes[first.0].value.dims2()?.1;
        let mut data = vec![0.0; mats.len() * cols];
        for (r, m) in mats.iter().enumerate() {
            let mv = &self.nodes[m.0].value;
            let (len, c) = mv.dims2()?;
            if c != cols {
                return dim_err("time_step widths differ");
            }
            if t < len {
                data[r * cols..(r + 1) * cols].copy_from_slice(mv.row(t));
            }
        }
        let out = Tensor::new(vec![mats.len(), cols], data)?;
        let op = Op::TimeStep {
            mats: mats.to_vec(),
            t,
        };
        self.push(out, op, mats, "time_step")
    }

    // ---- backward -------------------------------------------------------

    /// Back-propagates from a scalar `loss`. Leaf gradients accumulate across
    /// calls; interior gradients are recomputed each time.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return contract_err(format!(
                "backward from non-scalar of shape {:?}",
                self.nodes[loss.0].value.shape()
            ));
        }
        for node in &mut self.nodes[..=loss.0] {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.accumulate(loss, &[1.0]);
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let out = std::mem::replace(&mut self.nodes[i].value, Tensor::zeros(&[]));
            self.propagate(&op, &out, &g);
            self.nodes[i].op = op;
            self.nodes[i].value = out;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => node.grad = Some(g.to_vec()),
        }
    }

    fn accumulate_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let n = node.value.numel();
        f(node.grad.get_or_insert_with(|| vec![0.0; n]));
    }

    fn propagate(&mut self, op: &Op, out: &Tensor, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Unary(op, x) => {
                let x = *x;
                let xv = self.nodes[x.0].value.data();
                let y = out.data();
                let dx: Vec<f64> = match op {
                    Unary::Sigmoid => g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    Unary::Tanh => g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Unary::Exp => g.iter().zip(y).map(|(g, y)| g * y).collect(),
                    Unary::Log => g.iter().zip(xv).map(|(g, x)| g / x).collect(),
                    Unary::Negate => g.iter().map(|g| -g).collect(),
                    Unary::Abs => g.iter().zip(xv).map(|(g, x)| if *x == 0.0 { 0.0 } else { g * x.signum() }).collect(),
                };
                self.accumulate(x, &dx);
            }
            Op::Binary(op, a, b) => {
                let (a, b, op) = (*a, *b, *op);
                let a_scalar = self.nodes[a.0].value.is_scalar() && !out.is_scalar();
                let b_scalar = self.nodes[b.0].value.is_scalar() && !out.is_scalar();
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let at = |k: usize| if a_scalar { av[0] } else { av[k] };
                let bt = |k: usize| if b_scalar { bv[0] } else { bv[k] };
                let (da, db): (Vec<f64>, Vec<f64>) = match op {
                    Binary::Add => (g.to_vec(), g.to_vec()),
                    Binary::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                    Binary::Mul => (
                        g.iter().enumerate().map(|(k, g)| g * bt(k)).collect(),
                        g.iter().enumerate().map(|(k, g)| g * at(k)).collect(),
                    ),
                };
                let fold = |d: Vec<f64>, scalar: bool| {
                    if scalar {
                        vec![d.iter().sum()]
                    } else {
                        d
                    }
                };
                let (da, db) = (fold(da, a_scalar), fold(db, b_scalar));
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::Scale(x, k) => {
                let (x, k) = (*x, *k);
                let dx: Vec<f64> = g.iter().map(|g| g * k).collect();
                self.accumulate(x, &dx);
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let need_a = self.nodes[a.0].requires_grad;
                let need_b = self.nodes[b.0].requires_grad;
                let da = need_a.then(|| matmul_nt(g, bv.data(), m, n, k));
                let db = need_b.then(|| matmul_tn(av.data(), g, m, k, n));
                if let Some(da) = da {
                    self.accumulate(a, &da);
                }
                if let Some(db) = db {
                    self.accumulate(b, &db);
                }
            }
            Op::Transpose(x) => {
                let x = *x;
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let dx = transpose_raw(g, r, c);
                self.accumulate(x, &dx);
            }
            Op::AddRowBias(x, b) => {
                let (x, b) = (*x, *b);
                let cols = self.nodes[b.0].value.numel();
                let mut db = vec![0.0; cols];
                for row in g.chunks(cols) {
                    db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                self.accumulate(x, g);
                self.accumulate(b, &db);
            }
            Op::Concat { parts, axis } => {
                let parts = parts.clone();
                let axis = *axis;
                let shape = out.shape().to_vec();
                if shape.len() == 1 || axis == 0 {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.numel();
                        self.accumulate(p, &g[off..off + n]);
                        off += n;
                    }
                } else {
                    let (rows, total) = (shape[0], shape[1]);
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.shape()[1];
                        self.accumulate_with(p, |acc| {
                            for r in 0..rows {
                                let src = &g[r * total + off..r * total + off + w];
                                acc[r * w..(r + 1) * w]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(a, s)| *a += s);
                            }
                        });
                        off += w;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let (x, axis, start) = (*x, *axis, *start);
                let in_shape = self.nodes[x.0].value.shape().to_vec();
                let out_shape = out.shape().to_vec();
                self.accumulate_with(x, |acc| {
                    if in_shape.len() == 1 {
                        acc[start..start + g.len()]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(a, s)| *a += s);
                    } else if axis == 0 {
                        let c = in_shape[1];
                        acc[start * c..start * c + g.len()]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(a, s)| *a += s);
                    } else {
                        let (c, len) = (in_shape[1], out_shape[1]);
                        for r in 0..in_shape[0] {
                            acc[r * c + start..r * c + start + len]
                                .iter_mut()
                                .zip(&g[r * len..(r + 1) * len])
                                .for_each(|(a, s)| *a += s);
                        }
                    }
                });
            }
            Op::Reduce {
                x,
                kind,
                axis,
                argmax,
            } => {
                let (x, kind, axis) = (*x, *kind, *axis);
                let shape = self.nodes[x.0].value.shape().to_vec();
                let (rows, cols) = if shape.len() == 1 { (1, shape[0]) } else { (shape[0], shape[1]) };
                let along_rows = shape.len() == 2 && axis == 0;
                let extent = if along_rows { rows } else { cols };
                let idx = |o: usize, i: usize| if along_rows { i * cols + o } else { o * cols + i };
                let outer = g.len();
                let mut dx = vec![0.0; rows * cols];
                for o in 0..outer {
                    match kind {
                        ReduceKind::Sum => (0..extent).for_each(|i| dx[idx(o, i)] += g[o]),
                        ReduceKind::Mean => {
                            (0..extent).for_each(|i| dx[idx(o, i)] += g[o] / extent as f64)
                        }
                        ReduceKind::Max => dx[idx(o, argmax[o])] += g[o],
                    }
                }
                self.accumulate(x, &dx);
            }
            Op::SumAll(x) => {
                let x = *x;
                let n = self.nodes[x.0].value.numel();
                self.accumulate(x, &vec![g[0]; n]);
            }
            Op::Softmax(x) => {
                let x = *x;
                let (rows, cols) = out.dims2().expect("softmax output is ≤ 2-D");
                let y = out.data();
                let mut dx = vec![0.0; y.len()];
                for r in 0..rows {
                    let ys = &y[r * cols..(r + 1) * cols];
                    let gs = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dx[r * cols + c] = ys[c] * (gs[c] - dot);
                    }
                }
                self.accumulate(x, &dx);
            }
            Op::FrobeniusSq(x) => {
                let x = *x;
                let dx: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| 2.0 * v * g[0]).collect();
                self.accumulate(x, &dx);
            }
            Op::GradReverse(x, lambda) => {
                let (x, lambda) = (*x, *lambda);
                let dx: Vec<f64> = g.iter().map(|v| -lambda * v).collect();
                self.accumulate(x, &dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                scale,
                probs,
                ..
            } => {
                let logits = *logits;
                let cols = probs.len() / targets.len().max(1);
                let mut dx: Vec<f64> = probs.iter().map(|p| p * scale * g[0]).collect();
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = t {
                        dx[r * cols + t] -= scale * g[0];
                    }
                }
                self.accumulate(logits, &dx);
            }
            Op::Gather { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let d = self.nodes[table.0].value.shape()[1];
                self.accumulate_with(table, |acc| {
                    for (k, &id) in ids.iter().enumerate() {
                        acc[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&g[k * d..(k + 1) * d])
                            .for_each(|(a, s)| *a += s);
                    }
                });
            }
            Op::MaskRows { x, keep } => {
                let x = *x;
                let cols = g.len() / keep.len().max(1);
                let mut dx = g.to_vec();
                for r in (0..keep.len()).filter(|&r| !keep[r]) {
                    dx[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
                }
                self.accumulate(x, &dx);
            }
            Op::WhereRows { keep, a, b } => {
                let (a, b) = (*a, *b);
                let cols = g.len() / keep.len().max(1);
                let mut da = vec![0.0; g.len()];
                let mut db = vec![0.0; g.len()];
                for r in 0..keep.len() {
                    let dst = if keep[r] { &mut da } else { &mut db };
                    dst[r * cols..(r + 1) * cols].copy_from_slice(&g[r * cols..(r + 1) * cols]);
                }
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::PoolTime {
                steps,
                lengths,
                kind,
                argmax,
            } => {
                let steps = steps.clone();
                let lengths = lengths.clone();
                let kind = *kind;
                let argmax = argmax.clone();
                let rows = lengths.len();
                let cols = g.len() / rows;
                for (t, s) in steps.iter().enumerate() {
                    self.accumulate_with(*s, |acc| {
                        for r in 0..rows {
                            if t >= lengths[r] {
                                continue;
                            }
                            for c in 0..cols {
                                let k = r * cols + c;
                                match kind {
                                    PoolKind::Mean => acc[k] += g[k] / lengths[r] as f64,
                                    PoolKind::Max => {
                                        if argmax[k] == t {
                                            acc[k] += g[k];
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::StackRow { steps, row } => {
                let steps = steps.clone();
                let row = *row;
                let cols = out.shape()[1];
                for (t, s) in steps.iter().enumerate() {
                    self.accumulate_with(*s, |acc| {
                        acc[row * cols..(row + 1) * cols]
                            .iter_mut()
                            .zip(&g[t * cols..(t + 1) * cols])
                            .for_each(|(a, v)| *a += v);
                    });
                }
            }
            Op::TimeStep { mats, t } => {
                let mats = mats.clone();
                let t = *t;
                let cols = out.shape()[1];
                for (r, m) in mats.iter().enumerate() {
                    let len = self.nodes[m.0].value.shape()[0];
                    if t >= len {
                        continue;
                    }
                    self.accumulate_with(*m, |acc| {
                        acc[t * cols..(t + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(a, v)| *a += v);
                    });
                }
            }
        }
    }
}

fn unary_name(op: Unary) -> &'static str {
    match op {
        Unary::Sigmoid => "sigmoid",
        Unary::Tanh => "tanh",
        Unary::Exp => "exp",
        Unary::Log => "log",
        Unary::Negate => "negate",
        Unary::Abs => "abs",
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `row` in place (masked entries become 0); returns log Σ exp.
pub fn softmax_in_place(row: &mut [f64], mask: Option<&[bool]>) -> f64 {
    let ok = |c: usize| mask.map_or(true, |m| m[c]);
    let max = (0..row.len())
        .filter(|&c| ok(c))
        .map(|c| row[c])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (c, v) in row.iter_mut().enumerate() {
        if ok(c) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    row.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}
