//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a `1 × 1` node walks the record in reverse and returns
//! the gradient of that scalar with respect to every bound [`Parameter`].

use std::collections::HashMap;

use super::param::{Parameter, Parameterized};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    CrossEntropy(Var, Vec<usize>, Tensor),
    Mse(Var, Tensor),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_names: Vec<String>,
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Debug, Default)]
pub struct Gradients {
    by_name: HashMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Adds each gradient into the matching parameter's `grad` buffer.
    pub fn accumulate_into<M: Parameterized + ?Sized>(&self, model: &mut M) {
        for p in model.parameters_mut() {
            if let Some(g) = self.by_name.get(p.name()) {
                p.accumulate_grad(g);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records the current values of `p` as a differentiable leaf.
    pub fn param(&mut self, p: &Parameter) -> Var {
        let slot = match self.param_names.iter().position(|n| n == p.name()) {
            Some(i) => i,
            None => {
                self.param_names.push(p.name().to_string());
                self.param_names.len() - 1
            }
        };
        self.push(p.values().clone(), Op::Param(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add: shape mismatch");
        let v = x.zip_map(y, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!(b.rows(), 1, "add_row: bias must be a single row");
        assert_eq!(x.cols(), b.cols(), "add_row: width mismatch");
        let mut v = x.clone();
        for r in 0..v.rows() {
            v.row_mut(r).iter_mut().zip(b.data()).for_each(|(o, &bb)| *o += bb);
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul: shape mismatch");
        let v = x.zip_map(y, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        assert!(start <= end && end <= self.value(a).cols(), "slice_cols: range out of bounds");
        let v = self.value(a).slice_cols(start, end);
        self.push(v, Op::SliceCols(a, start))
    }

    /// Rows of `table` selected by `indices`, one output row per index.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut out = Tensor::zeros(indices.len(), t.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= t.rows() {
                return Err(Error::Input(format!("row index {i} out of range for {} rows", t.rows())));
            }
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        Ok(self.push(out, Op::Gather(table, indices.to_vec())))
    }

    /// Mean over rows of `-log softmax(row)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        if targets.len() != x.rows() {
            return Err(Error::Input(format!("{} targets for {} rows of logits", targets.len(), x.rows())));
        }
        let k = x.cols();
        let mut probs = Tensor::zeros(x.rows(), k);
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= k {
                return Err(Error::Input(format!("target class {t} out of range for {k} classes")));
            }
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = z.ln() + max;
            total += log_z - row[t];
            for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
        }
        let n = targets.len().max(1) as f64;
        Ok(self.push(Tensor::scalar(total / n), Op::CrossEntropy(logits, targets.to_vec(), probs)))
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Input(format!("mse: prediction {:?} vs target {:?}", p.shape(), target.shape())));
        }
        let n = p.len().max(1) as f64;
        let loss = p.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target.clone())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Gradient of the scalar `loss` with respect to every bound parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Usage(format!("backward needs a 1x1 loss node, got {}x{}", shape.0, shape.1)));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => {
                    let name = &self.param_names[*slot];
                    match out.by_name.get_mut(name) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            out.by_name.insert(name.clone(), g);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut ga, 0.0);
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut gb, 0.0);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        gb.data_mut().iter_mut().zip(g.row(r)).for_each(|(o, &x)| *o += x);
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|x| k * x)),
                Op::OneMinus(a) => accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, s| x * s * (1.0 - s));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(table, indices) => {
                    let t = self.value(*table);
                    let mut gt = Tensor::zeros(t.rows(), t.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        gt.row_mut(i).iter_mut().zip(g.row(r)).for_each(|(o, &x)| *o += x);
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let scale = g.data()[0] / targets.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = gl.row_mut(r);
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|x| *x *= scale);
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::Mse(pred, target) => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g.data()[0] / p.len().max(1) as f64;
                    let gp = p.zip_map(target, |a, b| scale * (a - b));
                    accumulate(&mut grads, *pred, gp);
                }
                Op::Sum(a) => {
                    let src = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::filled(src.rows(), src.cols(), g.data()[0]));
                }
            }
        }
        Ok(out)
    }

    /// Runs [`Tape::backward`] and adds the result into `model`'s gradients.
    pub fn backward_into<M: Parameterized + ?Sized>(&self, loss: Var, model: &mut M) -> Result<()> {
        self.backward(loss)?.accumulate_into(model);
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
