//! Reverse-mode differentiation over a per-forward-pass record of operations.
//!
//! Every op appends one node whose inputs already exist, so node order is a
//! topological order and the backward pass is a single reverse sweep.
//!
//! Broadcasting: the binary elementwise ops (`add`, `sub`, `mul`) accept either
//! equal shapes or an `m×n` left operand with a `1×n` right operand, in which
//! case the row vector is applied to every row. Nothing else broadcasts.

use std::borrow::Cow;

use super::tensor::gemm;
use super::{AutodiffError, ParamId, ParamSet, Tensor};

/// Handle to a node in a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a · bᵀ`
    MatMulNt(usize, usize),
    Add {
        a: usize,
        b: usize,
        broadcast: bool,
    },
    Sub {
        a: usize,
        b: usize,
        broadcast: bool,
    },
    Mul {
        a: usize,
        b: usize,
        broadcast: bool,
    },
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    ConcatCols(usize, usize),
    SliceCols {
        a: usize,
        start: usize,
    },
    MeanRows(usize),
    Sum(usize),
    CrossEntropy {
        logits: usize,
        target: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::LogSoftmaxRows(_) => "log_softmax_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::MeanRows(_) => "mean_rows",
            Op::Sum(_) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    /// Whether any leaf that takes gradients feeds this node.
    grad: bool,
}

/// Computation record for one forward pass.
///
/// Parameters are bound lazily from an optional [`ParamSet`]: the first
/// [`Tape::param`] call for an id creates a borrowed leaf, later calls reuse it.
pub struct Tape<'p> {
    params: Option<&'p ParamSet>,
    bound: Vec<Option<Var>>,
    nodes: Vec<Node<'p>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { params: None, bound: Vec::new(), nodes: Vec::new() }
    }

    pub fn with_params(params: &'p ParamSet) -> Self {
        Tape { params: Some(params), bound: vec![None; params.len()], nodes: Vec::with_capacity(256) }
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Name of the op that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Input leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// Input leaf that never receives a gradient; the backward pass skips
    /// everything that depends only on constants.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), false)
    }

    /// Whether the backward pass computes a gradient for `v`.
    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    /// Leaf bound to parameter `id` of the attached [`ParamSet`].
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let params = self.params.expect("tape has no parameter set");
        let v = self.push_leaf(Cow::Borrowed(params.get(id)), true);
        self.bound[id.0] = Some(v);
        v
    }

    fn push_leaf(&mut self, value: Cow<'p, Tensor>, grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op) -> Var {
        let g = |i: usize| self.nodes[i].grad;
        let grad = match op {
            Op::Leaf => true,
            Op::MatMul(a, b) | Op::MatMulNt(a, b) | Op::ConcatCols(a, b) => g(a) || g(b),
            Op::Add { a, b, .. } | Op::Sub { a, b, .. } | Op::Mul { a, b, .. } => g(a) || g(b),
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::SliceCols { a, .. }
            | Op::MeanRows(a)
            | Op::Sum(a)
            | Op::CrossEntropy { logits: a, .. } => g(a),
        };
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Tensor, op: Op) -> Var {
        self.push(Cow::Owned(value), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(AutodiffError::Shape { op: "matmul", lhs: (m, k), rhs: (k2, n) });
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (n, 1), out.data_mut(), 0.0);
        Ok(self.push_owned(out, Op::MatMul(a.0, b.0)))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(AutodiffError::Shape { op: "matmul_nt", lhs: (m, k), rhs: (n, k2) });
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (1, k), out.data_mut(), 0.0);
        Ok(self.push_owned(out, Op::MatMulNt(a.0, b.0)))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<bool, AutodiffError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            Ok(false)
        } else if sb.0 == 1 && sb.1 == sa.1 {
            Ok(true)
        } else {
            Err(AutodiffError::Shape { op, lhs: sa, rhs: sb })
        }
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b);
        let cols = av.cols();
        let mut out = av.clone();
        if bv.rows() == av.rows() {
            for (o, &y) in out.data_mut().iter_mut().zip(bv.data()) {
                *o = f(*o, y);
            }
        } else {
            for (i, o) in out.data_mut().iter_mut().enumerate() {
                *o = f(*o, bv.data()[i % cols]);
            }
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let broadcast = self.broadcast("add", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x + y);
        Ok(self.push_owned(out, Op::Add { a: a.0, b: b.0, broadcast }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let broadcast = self.broadcast("sub", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x - y);
        Ok(self.push_owned(out, Op::Sub { a: a.0, b: b.0, broadcast }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let broadcast = self.broadcast("mul", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x * y);
        Ok(self.push_owned(out, Op::Mul { a: a.0, b: b.0, broadcast }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push_owned(out, Op::Scale(a.0, c))
    }

    /// `max(x, 0)`, letting NaN through so divergence stays visible.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 || x.is_nan() { x } else { 0.0 });
        self.push_owned(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push_owned(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push_owned(out, Op::Tanh(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push_owned(out, Op::SoftmaxRows(a.0))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let out = log_softmax_rows(self.value(a));
        self.push_owned(out, Op::LogSoftmaxRows(a.0))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(AutodiffError::Shape { op: "concat_cols", lhs: (ra, ca), rhs: (rb, cb) });
        }
        let mut out = Tensor::zeros(ra, ca + cb);
        {
            let (av, bv) = (self.value(a), self.value(b));
            let data = out.data_mut();
            for r in 0..ra {
                data[r * (ca + cb)..r * (ca + cb) + ca].copy_from_slice(av.row(r));
                data[r * (ca + cb) + ca..(r + 1) * (ca + cb)].copy_from_slice(bv.row(r));
            }
        }
        Ok(self.push_owned(out, Op::ConcatCols(a.0, b.0)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.shape(a);
        if start + len > cols {
            return Err(AutodiffError::Slice { start, len, cols });
        }
        let mut out = Tensor::zeros(rows, len);
        {
            let av = self.value(a);
            for r in 0..rows {
                out.data_mut()[r * len..(r + 1) * len].copy_from_slice(&av.row(r)[start..start + len]);
            }
        }
        Ok(self.push_owned(out, Op::SliceCols { a: a.0, start }))
    }

    /// Column means as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (rows, cols) = av.shape();
        let mut out = Tensor::zeros(1, cols);
        for r in 0..rows {
            for (o, x) in out.data_mut().iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        out.scale_in_place(1.0 / rows.max(1) as f64);
        self.push_owned(out, Op::MeanRows(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push_owned(Tensor::scalar(s), Op::Sum(a.0))
    }

    /// `-log softmax(logits)[target]` for a `1×A` row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.shape(logits);
        if rows != 1 {
            return Err(AutodiffError::Shape { op: "cross_entropy", lhs: (rows, cols), rhs: (1, cols) });
        }
        if target >= cols {
            return Err(AutodiffError::TargetOutOfRange { target, classes: cols });
        }
        let logp = log_softmax_rows(self.value(logits));
        Ok(self.push_owned(Tensor::scalar(-logp.data()[target]), Op::CrossEntropy { logits: logits.0, target }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].grad {
            return Ok(Gradients { grads, bound: self.bound.clone() });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, bound: self.bound.clone() })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &*node.value;
        let nodes = &self.nodes;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a].value.shape();
                let n = out.cols();
                let av = nodes[a].value.data();
                let bv = nodes[b].value.data();
                // dA = dC · Bᵀ
                if let Some(ga) = acc(grads, nodes, a) {
                    gemm(m, n, k, g.data(), (n, 1), bv, (1, n), ga.data_mut(), 1.0);
                }
                // dB = Aᵀ · dC
                if let Some(gb) = acc(grads, nodes, b) {
                    gemm(k, m, n, av, (1, k), g.data(), (n, 1), gb.data_mut(), 1.0);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = nodes[a].value.shape();
                let n = out.cols();
                let av = nodes[a].value.data();
                let bv = nodes[b].value.data();
                // dA = dC · B
                if let Some(ga) = acc(grads, nodes, a) {
                    gemm(m, n, k, g.data(), (n, 1), bv, (k, 1), ga.data_mut(), 1.0);
                }
                // dB = dCᵀ · A
                if let Some(gb) = acc(grads, nodes, b) {
                    gemm(n, m, k, g.data(), (1, n), av, (k, 1), gb.data_mut(), 1.0);
                }
            }
            Op::Add { a, b, broadcast } | Op::Sub { a, b, broadcast } => {
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                if let Some(ga) = acc(grads, nodes, a) {
                    ga.add_scaled(g, 1.0);
                }
                if let Some(gb) = acc(grads, nodes, b) {
                    reduce_into(gb, g, broadcast, sign, None);
                }
            }
            Op::Mul { a, b, broadcast } => {
                let av: &Tensor = &nodes[a].value;
                let bv: &Tensor = &nodes[b].value;
                let cols = g.cols();
                if let Some(ga) = acc(grads, nodes, a) {
                    for (idx, (o, gv)) in ga.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let y = if broadcast { bv.data()[idx % cols] } else { bv.data()[idx] };
                        *o += gv * y;
                    }
                }
                if let Some(gb) = acc(grads, nodes, b) {
                    reduce_into(gb, g, broadcast, 1.0, Some(av));
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    ga.add_scaled(g, c);
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        if *y > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    let cols = out.cols();
                    for r in 0..out.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                        let dst = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dst[c] += y[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    let cols = out.cols();
                    for r in 0..out.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let total: f64 = gr.iter().sum();
                        let dst = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dst[c] += gr[c] - y[c].exp() * total;
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = nodes[a].value.cols();
                let cb = nodes[b].value.cols();
                let width = ca + cb;
                if let Some(ga) = acc(grads, nodes, a) {
                    for (dst, src) in ga.data_mut().chunks_mut(ca).zip(g.data().chunks(width)) {
                        dst.iter_mut().zip(&src[..ca]).for_each(|(o, v)| *o += v);
                    }
                }
                if let Some(gb) = acc(grads, nodes, b) {
                    for (dst, src) in gb.data_mut().chunks_mut(cb).zip(g.data().chunks(width)) {
                        dst.iter_mut().zip(&src[ca..]).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::SliceCols { a, start } => {
                if let Some(ga) = acc(grads, nodes, a) {
                    let width = ga.cols();
                    let len = out.cols();
                    for (dst, src) in ga.data_mut().chunks_mut(width).zip(g.data().chunks(len)) {
                        dst[start..start + len].iter_mut().zip(src).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::MeanRows(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    let cols = ga.cols();
                    let inv = 1.0 / ga.rows().max(1) as f64;
                    for (idx, o) in ga.data_mut().iter_mut().enumerate() {
                        *o += g.data()[idx % cols] * inv;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = acc(grads, nodes, a) {
                    let gv = g.item();
                    ga.data_mut().iter_mut().for_each(|o| *o += gv);
                }
            }
            Op::CrossEntropy { logits, target } => {
                let gv = g.item();
                let p = softmax_rows(&nodes[logits].value);
                if let Some(ga) = acc(grads, nodes, logits) {
                    for (c, (o, pc)) in ga.data_mut().iter_mut().zip(p.data()).enumerate() {
                        let onehot = if c == target { 1.0 } else { 0.0 };
                        *o += gv * (pc - onehot);
                    }
                }
            }
        }
    }
}

/// Gradient slot of node `idx`, or `None` when that node takes no gradient.
fn acc<'g>(grads: &'g mut [Option<Tensor>], nodes: &[Node<'_>], idx: usize) -> Option<&'g mut Tensor> {
    if !nodes[idx].grad {
        return None;
    }
    Some(grads[idx].get_or_insert_with(|| {
        let (r, c) = nodes[idx].value.shape();
        Tensor::zeros(r, c)
    }))
}

/// Adds `alpha * g` (times `weight` elementwise when given) into `dst`, summing
/// over rows when `dst` was broadcast.
fn reduce_into(dst: &mut Tensor, g: &Tensor, broadcast: bool, alpha: f64, weight: Option<&Tensor>) {
    let cols = g.cols();
    let w = |idx: usize| weight.map_or(1.0, |w| w.data()[idx]);
    if broadcast {
        for (idx, gv) in g.data().iter().enumerate() {
            dst.data_mut()[idx % cols] += alpha * gv * w(idx);
        }
    } else {
        for (idx, (o, gv)) in dst.data_mut().iter_mut().zip(g.data()).enumerate() {
            *o += alpha * gv * w(idx);
        }
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    bound: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`; zeros shaped like `v` when unreachable.
    pub fn wrt(&self, tape: &Tape<'_>, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.shape(v);
            Tensor::zeros(r, c)
        })
    }

    /// One gradient per parameter of `params`, in parameter order. Parameters that
    /// were never bound, or that do not reach the loss, get exact zeros.
    pub fn param_grads(&self, params: &ParamSet) -> Vec<Tensor> {
        self.collect_params(params, |t| t.clone())
    }

    /// Same as [`Gradients::param_grads`] but moves the tensors out.
    pub fn into_param_grads(mut self, params: &ParamSet) -> Vec<Tensor> {
        let bound = std::mem::take(&mut self.bound);
        params
            .ids()
            .map(|id| {
                bound
                    .get(id.0)
                    .copied()
                    .flatten()
                    .and_then(|v| self.grads.get_mut(v.0).and_then(Option::take))
                    .unwrap_or_else(|| {
                        let t = params.get(id);
                        Tensor::zeros(t.rows(), t.cols())
                    })
            })
            .collect()
    }

    fn collect_params(&self, params: &ParamSet, copy: impl Fn(&Tensor) -> Tensor) -> Vec<Tensor> {
        params
            .ids()
            .map(|id| {
                self.bound.get(id.0).copied().flatten().and_then(|v| self.get(v).map(&copy)).unwrap_or_else(|| {
                    let t = params.get(id);
                    Tensor::zeros(t.rows(), t.cols())
                })
            })
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
