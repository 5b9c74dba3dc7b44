//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Each
//! result is a [`Var`], a cheap handle into the tape. Calling
//! [`Tape::backward`] on a scalar walks the record in reverse and
//! accumulates adjoints into every node that depends on a trainable leaf.
//!
//! Binary elementwise ops broadcast over dimensions of size one in either
//! operand, so a `1 × n` bias adds to an `m × n` matrix and a `m × 1` column
//! scales each row.
//!
//! ```
//! use neuraltopics::gradcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::row(&[1.0, 2.0, 3.0]));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

use rand::Rng;

use super::tensor::{matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine(Var, f64),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Sqrt(Var),
    Abs(Var),
    Acos(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Dropout(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    trainable: bool,
}

/// Record of a forward computation, replayable in reverse for gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

type Dims = (usize, usize);

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Dims> {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let pick = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, _) => Some(y),
        (_, 1) => Some(x),
        _ => None,
    };
    match (pick(ar, br), pick(ac, bc)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::dim(op, a.shape(), b.shape())),
    }
}

#[inline]
fn bidx(i: usize, j: usize, (r, c): Dims) -> usize {
    (if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, out: Dims, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (ad, bd) = (a.dims(), b.dims());
    let (ax, bx) = (a.data(), b.data());
    let mut data = Vec::with_capacity(out.0 * out.1);
    for i in 0..out.0 {
        for j in 0..out.1 {
            data.push(f(ax[bidx(i, j, ad)], bx[bidx(i, j, bd)]));
        }
    }
    Tensor::matrix(out.0, out.1, data)
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable: false,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; after [`backward`](Self::backward) it always holds a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].trainable = true;
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let shape = self.nodes[v.0].value.shape().to_vec();
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(shape, g.clone()).expect("gradient shape"))
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        let shape = self.nodes[v.0].value.shape().to_vec();
        self.grads[v.0]
            .take()
            .map(|g| Tensor::new(shape, g).expect("gradient shape"))
    }

    /// Clears all gradients so [`backward`](Self::backward) may run again.
    pub fn reset(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    // ---- primitives -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.unary(a, value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = zip_broadcast(x, y, broadcast("add", x, y)?, |p, q| p + q);
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = zip_broadcast(x, y, broadcast("sub", x, y)?, |p, q| p - q);
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = zip_broadcast(x, y, broadcast("mul", x, y)?, |p, q| p * q);
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = zip_broadcast(x, y, broadcast("div", x, y)?, |p, q| p / q);
        Ok(self.binary(a, b, value, Op::Div(a, b)))
    }

    /// `scale · a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|v| scale * v + shift);
        self.unary(a, value, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    /// `1 − a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(a, value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.unary(a, value, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.unary(a, value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.unary(a, value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.unary(a, value, Op::Relu(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.unary(a, value, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.unary(a, value, Op::Abs(a))
    }

    /// Inputs are clamped into `[-1, 1]`; the adjoint is zero where
    /// `|a| ≥ 1 − 1e-12`.
    pub fn acos(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.clamp(-1.0, 1.0).acos());
        self.unary(a, value, Op::Acos(a))
    }

    /// Adjoint passes only where `lo ≤ a ≤ hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.unary(a, value, Op::Clamp(a, lo, hi))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a))?;
        Ok(self.unary(a, value, Op::SoftmaxRows(a)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = log_softmax_rows(self.value(a))?;
        Ok(self.unary(a, value, Op::LogSoftmaxRows(a)))
    }

    /// Sum of every entry, as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.unary(a, value, Op::Sum(a))
    }

    /// Sum along each row, giving `m × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = x.dims();
        let data = (0..m).map(|i| x.data()[i * n..(i + 1) * n].iter().sum()).collect();
        self.unary(a, Tensor::matrix(m, 1, data), Op::SumRows(a))
    }

    /// Sum down each column, giving `1 × n`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = x.dims();
        let mut data = vec![0.0; n];
        for i in 0..m {
            for (d, v) in data.iter_mut().zip(&x.data()[i * n..(i + 1) * n]) {
                *d += v;
            }
        }
        self.unary(a, Tensor::matrix(1, n, data), Op::SumCols(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = x.dims();
        if start >= end || end > n {
            return Err(Error::Contract(format!(
                "column slice {start}..{end} of a {m}×{n} tensor"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&x.data()[i * n + start..i * n + end]);
        }
        Ok(self.unary(a, Tensor::matrix(m, w, data), Op::SliceCols(a, start)))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = x.dims();
        if start >= end || end > m {
            return Err(Error::Contract(format!(
                "row slice {start}..{end} of a {m}×{n} tensor"
            )));
        }
        let data = x.data()[start * n..end * n].to_vec();
        Ok(self.unary(a, Tensor::matrix(end - start, n, data), Op::SliceRows(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let m = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(Error::dim(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = parts.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(Tensor::matrix(m, n, data), Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let x = self.value(p);
            if x.cols() != n {
                return Err(Error::dim("concat_rows", self.value(first).shape(), x.shape()));
            }
            m += x.rows();
            data.extend_from_slice(x.data());
        }
        let rg = parts.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(Tensor::matrix(m, n, data), Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Inverted dropout: each entry is kept with probability `keep` and
    /// scaled by `1/keep`. With `keep >= 1` this is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, keep: f64, rng: &mut R) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Contract(format!("dropout keep probability {keep} not in (0, 1]")));
        }
        if keep >= 1.0 {
            return Ok(a);
        }
        let x = self.value(a);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.unary(a, value, Op::Dropout(a, mask)))
    }

    // ---- reverse pass -----------------------------------------------------

    /// Propagates `d loss / d node` to every node that depends on a
    /// trainable leaf. Fails on a non-scalar loss or when gradients from a
    /// previous call have not been cleared with [`reset`](Self::reset).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward called twice without reset".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        for idx in 0..self.nodes.len() {
            if self.nodes[idx].trainable && self.grads[idx].is_none() {
                self.grads[idx] = Some(vec![0.0; self.nodes[idx].value.len()]);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Sums an `out`-shaped adjoint down to the (possibly broadcast) shape of `target`.
    fn reduce_to(&self, target: Var, out: Dims, g: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let td = self.value(target).dims();
        let mut acc = vec![0.0; td.0 * td.1];
        for i in 0..out.0 {
            for j in 0..out.1 {
                acc[bidx(i, j, td)] += g(i, j);
            }
        }
        acc
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let out_dims = self.nodes[idx].value.dims();
        let (m, n) = out_dims;
        // Elementwise adjoint helper: g ⊙ f(x, y) where x is the input value
        // and y the output value.
        let unary = |tape: &Tape, a: Var, f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            let x = tape.value(a).data();
            let y = tape.nodes[idx].value.data();
            g.iter()
                .zip(x.iter().zip(y))
                .map(|(gi, (&xi, &yi))| gi * f(xi, yi))
                .collect()
        };

        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let k = self.value(a).cols();
                if self.nodes[a.0].requires_grad {
                    let da = matmul_nt(g, self.value(b).data(), m, n, k);
                    self.accumulate(a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let db = matmul_tn(self.value(a).data(), g, m, k, n);
                    self.accumulate(b, db);
                }
            }
            &Op::Transpose(a) => {
                let gt = Tensor::matrix(m, n, g.to_vec()).transpose().into_data();
                self.accumulate(a, gt);
            }
            &Op::Add(a, b) => {
                let da = self.reduce_to(a, out_dims, |i, j| g[i * n + j]);
                let db = self.reduce_to(b, out_dims, |i, j| g[i * n + j]);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Sub(a, b) => {
                let da = self.reduce_to(a, out_dims, |i, j| g[i * n + j]);
                let db = self.reduce_to(b, out_dims, |i, j| -g[i * n + j]);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Mul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let (xd, yd) = (x.dims(), y.dims());
                let da = self.reduce_to(a, out_dims, |i, j| g[i * n + j] * y.data()[bidx(i, j, yd)]);
                let db = self.reduce_to(b, out_dims, |i, j| g[i * n + j] * x.data()[bidx(i, j, xd)]);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Div(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let (xd, yd) = (x.dims(), y.dims());
                let da = self.reduce_to(a, out_dims, |i, j| g[i * n + j] / y.data()[bidx(i, j, yd)]);
                let db = self.reduce_to(b, out_dims, |i, j| {
                    let yv = y.data()[bidx(i, j, yd)];
                    -g[i * n + j] * x.data()[bidx(i, j, xd)] / (yv * yv)
                });
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Affine(a, s) => {
                let d = g.iter().map(|v| v * s).collect();
                self.accumulate(a, d);
            }
            &Op::Exp(a) => {
                let d = unary(self, a, &|_, y| y);
                self.accumulate(a, d);
            }
            &Op::Log(a) => {
                let d = unary(self, a, &|x, _| 1.0 / x);
                self.accumulate(a, d);
            }
            &Op::Tanh(a) => {
                let d = unary(self, a, &|_, y| 1.0 - y * y);
                self.accumulate(a, d);
            }
            &Op::Sigmoid(a) => {
                let d = unary(self, a, &|_, y| y * (1.0 - y));
                self.accumulate(a, d);
            }
            &Op::Relu(a) => {
                let d = unary(self, a, &|x, _| if x > 0.0 { 1.0 } else { 0.0 });
                self.accumulate(a, d);
            }
            &Op::Sqrt(a) => {
                let d = unary(self, a, &|_, y| 0.5 / y);
                self.accumulate(a, d);
            }
            &Op::Abs(a) => {
                let d = unary(self, a, &|x, _| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                self.accumulate(a, d);
            }
            &Op::Acos(a) => {
                let d = unary(self, a, &|x, _| {
                    if x.abs() < 1.0 - 1e-12 {
                        -1.0 / (1.0 - x * x).sqrt()
                    } else {
                        0.0
                    }
                });
                self.accumulate(a, d);
            }
            &Op::Clamp(a, lo, hi) => {
                let d = unary(self, a, &|x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 });
                self.accumulate(a, d);
            }
            &Op::SoftmaxRows(a) => {
                let y = self.nodes[idx].value.data();
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(p, q)| p * q).sum();
                    for j in r {
                        d[j] = y[j] * (g[j] - dot);
                    }
                }
                self.accumulate(a, d);
            }
            &Op::LogSoftmaxRows(a) => {
                let y = self.nodes[idx].value.data();
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let total: f64 = g[r.clone()].iter().sum();
                    for j in r {
                        d[j] = g[j] - y[j].exp() * total;
                    }
                }
                self.accumulate(a, d);
            }
            &Op::Sum(a) => {
                let d = vec![g[0]; self.value(a).len()];
                self.accumulate(a, d);
            }
            &Op::SumRows(a) => {
                let (_, cols) = self.value(a).dims();
                let d = (0..m * cols).map(|p| g[p / cols]).collect();
                self.accumulate(a, d);
            }
            &Op::SumCols(a) => {
                let (rows, _) = self.value(a).dims();
                let d = (0..rows * n).map(|p| g[p % n]).collect();
                self.accumulate(a, d);
            }
            &Op::SliceCols(a, start) => {
                let cols = self.value(a).cols();
                let mut d = vec![0.0; m * cols];
                for i in 0..m {
                    d[i * cols + start..i * cols + start + n].copy_from_slice(&g[i * n..(i + 1) * n]);
                }
                self.accumulate(a, d);
            }
            &Op::SliceRows(a, start) => {
                let rows = self.value(a).rows();
                let mut d = vec![0.0; rows * n];
                d[start * n..(start + m) * n].copy_from_slice(g);
                self.accumulate(a, d);
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(p).cols();
                    let mut d = Vec::with_capacity(m * w);
                    for i in 0..m {
                        d.extend_from_slice(&g[i * n + offset..i * n + offset + w]);
                    }
                    offset += w;
                    self.accumulate(p, d);
                }
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.value(p).len();
                    self.accumulate(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Dropout(a, mask) => {
                let d = g.iter().zip(mask).map(|(p, q)| p * q).collect();
                let a = *a;
                self.accumulate(a, d);
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax; fails on NaN input.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let mut out = log_softmax_rows(x)?;
    out.data_mut().iter_mut().for_each(|v| *v = v.exp());
    Ok(out)
}

pub fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let (m, n) = x.dims();
    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = x.row_slice(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        data.extend(row.iter().map(|v| v - lse));
    }
    Ok(Tensor::matrix(m, n, data))
}
