//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records a program as a flat list of nodes; every operation
//! returns a [`TensorId`] handle. Indices grow monotonically, so the tape is
//! already topologically sorted and [`Tape::backward`] is a single reverse
//! sweep that accumulates gradients into every node that requires them.
//!
//! The operation set is exactly what the models in this crate need: dense and
//! sparse-dense matrix products, ReLU, inverted dropout, elementwise add
//! (residual connections), node/layer normalization, masked softmax
//! cross-entropy, an L1 penalty, and the `square`/`sum` helpers used by
//! gradient-check programs.
//!
//! Gradients are *not* tracked through leaves created with
//! `requires_grad = false`; whole subtrees whose inputs need no gradient are
//! skipped during the backward sweep, which keeps the (large, constant)
//! feature matrix out of every backward pass.

mod check;

pub use check::gradient_check;

use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::matrix::Matrix;
use crate::norm::{self, LayerNormMode, NormRowMeta};
use crate::rng::Rng;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// The recorded operation of one tape node, with whatever forward-pass
/// byproducts its backward pass needs.
enum Op {
    Leaf,
    MatMul {
        a: TensorId,
        b: TensorId,
    },
    Spmm {
        adj: Arc<SparseAdjacency>,
        h: TensorId,
    },
    Relu {
        x: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Dropout {
        x: TensorId,
        /// Per-element factor: 0.0 for dropped entries, 1/(1-rate) for kept.
        mask: Vec<f64>,
    },
    NodeNorm {
        x: TensorId,
        p: u32,
        meta: Vec<NormRowMeta>,
    },
    LayerNorm {
        x: TensorId,
        mode: LayerNormMode,
        alpha: Option<TensorId>,
        beta: Option<TensorId>,
        /// Standardized input, kept for both dx and d(alpha).
        xhat: Matrix,
        meta: Vec<NormRowMeta>,
    },
    SoftmaxXent {
        logits: TensorId,
        labels: Arc<Vec<i64>>,
        mask: Arc<Vec<bool>>,
        /// Row-wise softmax of the logits (only masked rows are ever read).
        softmax: Matrix,
        masked_count: usize,
    },
    L1Penalty {
        params: Vec<TensorId>,
        weight: f64,
    },
    Square {
        x: TensorId,
    },
    Sum {
        x: TensorId,
    },
}

struct TapeNode {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`TensorId`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given node, if one was
    /// accumulated (leaves with `requires_grad = false` have none).
    pub fn get(&self, id: TensorId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Remove and return a gradient, leaving `None` in its place.
    pub fn take(&mut self, id: TensorId) -> Option<Matrix> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

/// A recording of a tensor program.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Whether gradients flow into this node.
    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> TensorId {
        self.nodes.push(TapeNode { op, value, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    /// Record an input tensor.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> TensorId {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Dense product `a * b`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Op::MatMul { a, b }, value, rg))
    }

    /// Sparse-dense product `adj * h`. The adjacency must be symmetric
    /// (guaranteed for instances built from undirected edge lists), which the
    /// backward pass exploits: `d h = adj^T * g = adj * g`.
    pub fn spmm(&mut self, adj: &Arc<SparseAdjacency>, h: TensorId) -> Result<TensorId> {
        let value = adj.spmm(self.value(h))?;
        let rg = self.requires_grad(h);
        Ok(self.push(Op::Spmm { adj: Arc::clone(adj), h }, value, rg))
    }

    /// Elementwise `max(x, 0)`. The (sub)gradient at exactly 0 is 0.
    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.requires_grad(x);
        self.push(Op::Relu { x }, value, rg)
    }

    /// Elementwise sum of two same-shaped tensors (residual connections).
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Op::Add { a, b }, value, rg))
    }

    /// Inverted dropout: each entry is dropped with probability `rate`,
    /// survivors are scaled by `1/(1-rate)` so the expected value is
    /// unchanged. `rate = 0` is the identity and records nothing (and draws
    /// nothing from the generator). Only call during training; evaluation
    /// passes simply skip the op.
    pub fn dropout(&mut self, x: TensorId, rate: f64, rng: &mut Rng) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let xv = self.value(x);
        let mut mask = Vec::with_capacity(xv.rows() * xv.cols());
        let mut out = xv.clone();
        for v in out.as_mut_slice() {
            let keep = rng.random::<f64>() >= rate;
            let factor = if keep { keep_scale } else { 0.0 };
            mask.push(factor);
            *v *= factor;
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Op::Dropout { x, mask }, out, rg))
    }

    /// Node normalization: divide each row by `sigma^{1/p}`; degenerate rows
    /// (sigma below [`norm::SIGMA_EPS`]) pass through in both directions.
    pub fn node_norm(&mut self, x: TensorId, p: u32) -> Result<TensorId> {
        let (value, meta) = norm::node_norm_forward(self.value(x), p)?;
        let rg = self.requires_grad(x);
        Ok(self.push(Op::NodeNorm { x, p, meta }, value, rg))
    }

    /// Layer normalization in one of its three flavors. `alpha`/`beta` are
    /// required (as `1 x d` tensors) exactly when `mode` is
    /// [`LayerNormMode::Full`].
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        mode: LayerNormMode,
        alpha: Option<TensorId>,
        beta: Option<TensorId>,
    ) -> Result<TensorId> {
        if mode == LayerNormMode::Full && (alpha.is_none() || beta.is_none()) {
            return Err(Error::Invalid("layer_norm full mode requires alpha and beta".into()));
        }
        let a_val = alpha.map(|a| self.value(a).clone());
        let b_val = beta.map(|b| self.value(b).clone());
        let (value, xhat, meta) =
            norm::layer_norm_forward(self.value(x), mode, a_val.as_ref(), b_val.as_ref())?;
        let mut rg = self.requires_grad(x);
        if let Some(a) = alpha {
            rg |= self.requires_grad(a);
        }
        if let Some(b) = beta {
            rg |= self.requires_grad(b);
        }
        Ok(self.push(Op::LayerNorm { x, mode, alpha, beta, xhat, meta }, value, rg))
    }

    /// Masked mean softmax cross-entropy.
    ///
    /// `labels[i]` must lie in `[0, num_classes)` for every masked `i`
    /// (unmasked labels are ignored and may be negative). The output is a
    /// `1 x 1` tensor holding the mean loss over masked rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        labels: &[i64],
        mask: &[bool],
    ) -> Result<TensorId> {
        let lv = self.value(logits);
        let (n, c) = lv.shape();
        if labels.len() != n || mask.len() != n {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: logits have {n} rows but got {} labels and {} mask entries",
                labels.len(),
                mask.len()
            )));
        }
        let masked_count = mask.iter().filter(|&&m| m).count();
        if masked_count == 0 {
            return Err(Error::Invalid("softmax_cross_entropy: mask selects no rows".into()));
        }
        let mut softmax = Matrix::zeros(n, c);
        let mut total = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let label = labels[i];
            if label < 0 || label as usize >= c {
                return Err(Error::Invalid(format!(
                    "softmax_cross_entropy: label {label} out of range [0, {c}) at masked row {i}"
                )));
            }
            let row = lv.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut denom = 0.0;
            for &v in row {
                denom += (v - max).exp();
            }
            let log_denom = denom.ln();
            for (j, &v) in row.iter().enumerate() {
                softmax.set(i, j, (v - max).exp() / denom);
            }
            total += log_denom - (row[label as usize] - max);
        }
        let loss = total / masked_count as f64;
        let value = Matrix::from_flat(1, 1, vec![loss])?;
        let rg = self.requires_grad(logits);
        let op = Op::SoftmaxXent {
            logits,
            labels: Arc::new(labels.to_vec()),
            mask: Arc::new(mask.to_vec()),
            softmax,
            masked_count,
        };
        Ok(self.push(op, value, rg))
    }

    /// `weight * sum(|w|)` over a set of parameter tensors, as a `1 x 1`
    /// tensor. The subgradient of `|w|` at 0 is 0.
    pub fn l1_penalty(&mut self, params: &[TensorId], weight: f64) -> Result<TensorId> {
        if weight < 0.0 {
            return Err(Error::Invalid(format!("l1 weight must be >= 0, got {weight}")));
        }
        if params.is_empty() {
            return Err(Error::Invalid("l1_penalty over an empty parameter list".into()));
        }
        let mut total = 0.0;
        for &p in params {
            total += self.value(p).as_slice().iter().map(|v| v.abs()).sum::<f64>();
        }
        let value = Matrix::from_flat(1, 1, vec![weight * total])?;
        let rg = params.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(Op::L1Penalty { params: params.to_vec(), weight }, value, rg))
    }

    /// Elementwise square, used by gradient-check programs.
    pub fn square(&mut self, x: TensorId) -> TensorId {
        let value = self.value(x).map(|v| v * v);
        let rg = self.requires_grad(x);
        self.push(Op::Square { x }, value, rg)
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let value = Matrix::from_flat(1, 1, vec![self.value(x).sum()]).unwrap();
        let rg = self.requires_grad(x);
        self.push(Op::Sum { x }, value, rg)
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for every
    /// node on a `requires_grad` path; other nodes have `None`.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        let loss_node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Invalid("backward: loss id is not on this tape".into()))?;
        if loss_node.value.shape() != (1, 1) {
            return Err(Error::Invalid(format!(
                "backward requires a scalar (1x1) loss, got {:?}",
                loss_node.value.shape()
            )));
        }
        if !loss_node.requires_grad {
            return Err(Error::Invalid(
                "backward: loss does not depend on any tensor requiring gradients".into(),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_flat(1, 1, vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Add `source`'s contribution into `grads[target]`, allocating on first
    /// touch. Skips nodes that do not require gradients.
    fn accumulate(&self, grads: &mut [Option<Matrix>], target: TensorId, delta: Matrix) {
        if !self.requires_grad(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => {
                existing
                    .add_scaled(&delta, 1.0)
                    .expect("gradient shape always matches the forward value");
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if self.requires_grad(*a) {
                    let da = g.matmul_transpose(self.value(*b))?;
                    self.accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let db = self.value(*a).transpose_matmul(g)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Spmm { adj, h } => {
                if self.requires_grad(*h) {
                    let dh = adj.spmm(g)?;
                    self.accumulate(grads, *h, dh);
                }
            }
            Op::Relu { x } => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Add { a, b } => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
            }
            Op::Dropout { x, mask } => {
                if self.requires_grad(*x) {
                    let mut dx = g.clone();
                    for (d, &m) in dx.as_mut_slice().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::NodeNorm { x, p, meta } => {
                if self.requires_grad(*x) {
                    let dx = node_norm_backward(self.value(*x), g, *p, meta);
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::LayerNorm { x, mode, alpha, beta, xhat, meta } => {
                self.layer_norm_backward(*x, *mode, *alpha, *beta, xhat, meta, g, grads)?;
            }
            Op::SoftmaxXent { logits, labels, mask, softmax, masked_count } => {
                if self.requires_grad(*logits) {
                    let scale = g.get(0, 0) / *masked_count as f64;
                    let mut dl = Matrix::zeros(softmax.rows(), softmax.cols());
                    for i in 0..softmax.rows() {
                        if !mask[i] {
                            continue;
                        }
                        let label = labels[i] as usize;
                        let s_row = softmax.row(i);
                        let d_row = dl.row_mut(i);
                        for (j, d) in d_row.iter_mut().enumerate() {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            *d = scale * (s_row[j] - onehot);
                        }
                    }
                    self.accumulate(grads, *logits, dl);
                }
            }
            Op::L1Penalty { params, weight } => {
                let scale = g.get(0, 0) * weight;
                for &p in params {
                    if self.requires_grad(p) {
                        let dp = self.value(p).map(|v| {
                            if v > 0.0 {
                                scale
                            } else if v < 0.0 {
                                -scale
                            } else {
                                0.0
                            }
                        });
                        self.accumulate(grads, p, dp);
                    }
                }
            }
            Op::Square { x } => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        *d *= 2.0 * v;
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Sum { x } => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x);
                    let dx = Matrix::filled(xv.rows(), xv.cols(), g.get(0, 0));
                    self.accumulate(grads, *x, dx);
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_norm_backward(
        &self,
        x: TensorId,
        mode: LayerNormMode,
        alpha: Option<TensorId>,
        beta: Option<TensorId>,
        xhat: &Matrix,
        meta: &[NormRowMeta],
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<()> {
        let (n, d) = g.shape();
        let df = d as f64;
        if self.requires_grad(x) {
            let mut dx = Matrix::zeros(n, d);
            for (i, row_meta) in meta.iter().enumerate() {
                let g_row = g.row(i);
                match mode {
                    LayerNormMode::MeanSubtract => {
                        let mean_g = g_row.iter().sum::<f64>() / df;
                        for (o, &gv) in dx.row_mut(i).iter_mut().zip(g_row) {
                            *o = gv - mean_g;
                        }
                    }
                    LayerNormMode::Star | LayerNormMode::Full => {
                        let a_row = alpha.map(|a| self.value(a).row(0).to_vec());
                        // u = g ⊙ alpha (or just g for the star form).
                        let u: Vec<f64> = match &a_row {
                            Some(a) => g_row.iter().zip(a).map(|(&gv, &av)| gv * av).collect(),
                            None => g_row.to_vec(),
                        };
                        let sigma_hat = row_meta.sigma;
                        let mean_u = u.iter().sum::<f64>() / df;
                        if row_meta.degenerate {
                            // Divisor was clamped to a constant: only the
                            // centering term contributes.
                            for (o, &uv) in dx.row_mut(i).iter_mut().zip(&u) {
                                *o = (uv - mean_u) / sigma_hat;
                            }
                        } else {
                            let xh_row = xhat.row(i);
                            let mean_ux = u
                                .iter()
                                .zip(xh_row)
                                .map(|(&uv, &xv)| uv * xv)
                                .sum::<f64>()
                                / df;
                            for ((o, &uv), &xv) in
                                dx.row_mut(i).iter_mut().zip(&u).zip(xh_row)
                            {
                                *o = (uv - mean_u - xv * mean_ux) / sigma_hat;
                            }
                        }
                    }
                }
            }
            self.accumulate(grads, x, dx);
        }
        if mode == LayerNormMode::Full {
            if let Some(a) = alpha {
                if self.requires_grad(a) {
                    let mut da = Matrix::zeros(1, d);
                    for i in 0..n {
                        for (j, acc) in da.row_mut(0).iter_mut().enumerate() {
                            *acc += g.get(i, j) * xhat.get(i, j);
                        }
                    }
                    self.accumulate(grads, a, da);
                }
            }
            if let Some(b) = beta {
                if self.requires_grad(b) {
                    let mut db = Matrix::zeros(1, d);
                    for i in 0..n {
                        for (j, acc) in db.row_mut(0).iter_mut().enumerate() {
                            *acc += g.get(i, j);
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
        }
        Ok(())
    }
}

/// Backward pass of node normalization.
///
/// For a non-degenerate row with input `h`, mean `mu`, std `sigma` and
/// incoming gradient `g`:
///
/// ```text
/// dL/dh_j = sigma^{-1/p} g_j - (sum_k g_k h_k) (h_j - mu) sigma^{-1/p - 2} / (p d)
/// ```
///
/// Degenerate rows were passed through, so their gradient passes through too.
fn node_norm_backward(h: &Matrix, g: &Matrix, p: u32, meta: &[NormRowMeta]) -> Matrix {
    let (n, d) = h.shape();
    let df = d as f64;
    let pf = p as f64;
    let mut dx = Matrix::zeros(n, d);
    for (i, row_meta) in meta.iter().enumerate() {
        let g_row = g.row(i);
        if row_meta.degenerate {
            dx.row_mut(i).copy_from_slice(g_row);
            continue;
        }
        let h_row = h.row(i);
        let sigma = row_meta.sigma;
        let mu = row_meta.mean;
        let scale = sigma.powf(-1.0 / pf);
        let dot: f64 = g_row.iter().zip(h_row).map(|(&gv, &hv)| gv * hv).sum();
        let factor = dot * sigma.powf(-1.0 / pf - 2.0) / (pf * df);
        for ((o, &gv), &hv) in dx.row_mut(i).iter_mut().zip(g_row).zip(h_row) {
            *o = scale * gv - factor * (hv - mu);
        }
    }
    dx
}
