//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Each
//! recorded value is addressed by a [`Var`] handle. [`Tape::backward`]
//! replays the record from the loss back to the leaves, visiting every node
//! once in reverse insertion order (insertion order is already topological).
//! Only nodes that depend on a parameter take part in the backward sweep.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::dense::kernels;
use crate::tensor::{ops, DenseMatrix, SparseMatrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction applied by [`Tape::kl_rows`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    PerRow,
    Sum,
    Mean,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Spmm(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Dropout(Var, Vec<f64>),
    Softmax(Var),
    LogSoftmax(Var),
    CrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: DenseMatrix,
    },
    KlRows {
        target: Arc<DenseMatrix>,
        q: Var,
        rows: Vec<usize>,
        reduce: Reduce,
    },
    PickSum {
        x: Var,
        rows: Vec<usize>,
        cols: Vec<usize>,
        weights: Vec<f64>,
    },
    GatAttention {
        wh: Var,
        att_src: Var,
        att_dst: Var,
        graph: Arc<SparseMatrix>,
        heads: usize,
        concat: bool,
        slope: f64,
        cache: AttentionCache,
    },
}

struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
///
/// A tape is single-owner and is meant to live for one forward/backward
/// pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the parameter leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, materialising zeros when `v` does not influence
    /// the output.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
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

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that gradients are not tracked through.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn params(&mut self, values: &[DenseMatrix]) -> Vec<Var> {
        values.iter().map(|p| self.param(p.clone())).collect()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Sparse-dense product. Edge values are constants.
    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.spmm(self.value(d))?;
        let rg = self.rg(d);
        Ok(self.push(value, Op::Spmm(Arc::clone(s), d), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?}", va.shape()),
                format!("{:?}", vb.shape()),
            ));
        }
        let mut value = va.clone();
        value.add_scaled(vb, 1.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds a `1 x cols` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(Error::shape(
                "add_row",
                format!("1x{}", va.cols()),
                format!("{}x{}", vb.rows(), vb.cols()),
            ));
        }
        let mut value = va.clone();
        let cols = value.cols();
        for chunk in value.data_mut().chunks_mut(cols) {
            for (x, b) in chunk.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} must lie in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let mask = ops::dropout_mask(self.value(a).len(), rate, rng);
        let mut value = self.value(a).clone();
        for (x, m) in value.data_mut().iter_mut().zip(&mask) {
            *x *= m;
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = ops::row_softmax(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = ops::row_log_softmax(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmax(a), rg)
    }

    /// Mean cross-entropy of `logits[rows[i]]` against `labels[i]`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if rows.len() != labels.len() {
            return Err(Error::shape("cross_entropy", rows.len(), labels.len()));
        }
        if rows.is_empty() {
            return Err(Error::invalid("cross_entropy over an empty row set"));
        }
        for (&r, &y) in rows.iter().zip(labels) {
            if r >= lv.rows() {
                return Err(Error::IndexOutOfRange {
                    context: "cross_entropy row".into(),
                    index: r,
                    bound: lv.rows(),
                });
            }
            if y >= lv.cols() {
                return Err(Error::IndexOutOfRange {
                    context: "cross_entropy label".into(),
                    index: y,
                    bound: lv.cols(),
                });
            }
        }
        let sel = lv.select_rows(rows);
        let logp = ops::row_log_softmax(&sel);
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &y)| logp.get(i, y))
            .sum::<f64>()
            / rows.len() as f64;
        let probs = logp.map(f64::exp);
        let rg = self.rg(logits);
        Ok(self.push(
            DenseMatrix::scalar(loss),
            Op::CrossEntropy {
                logits,
                rows: rows.to_vec(),
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `KL(target[r] || q[r])` for each listed row, with both operands
    /// clamped below at [`ops::KL_EPS`]. `target` is a constant aligned
    /// row-for-row with `q`.
    pub fn kl_rows(
        &mut self,
        target: &Arc<DenseMatrix>,
        q: Var,
        rows: &[usize],
        reduce: Reduce,
    ) -> Result<Var> {
        let qv = self.value(q);
        if target.shape() != qv.shape() {
            return Err(Error::shape(
                "kl_rows",
                format!("{:?}", qv.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        let per_row: Vec<f64> = rows
            .iter()
            .map(|&r| ops::kl_row(target.row(r), qv.row(r)))
            .collect();
        let value = match reduce {
            Reduce::PerRow => DenseMatrix::from_vec(rows.len(), 1, per_row)?,
            Reduce::Sum => DenseMatrix::scalar(per_row.iter().sum()),
            Reduce::Mean => {
                if rows.is_empty() {
                    return Err(Error::invalid("mean KL over an empty row set"));
                }
                DenseMatrix::scalar(per_row.iter().sum::<f64>() / rows.len() as f64)
            }
        };
        let rg = self.rg(q);
        Ok(self.push(
            value,
            Op::KlRows {
                target: Arc::clone(target),
                q,
                rows: rows.to_vec(),
                reduce,
            },
            rg,
        ))
    }

    /// `sum_i weights[i] * x[rows[i], cols[i]]` as a scalar.
    pub fn pick_sum(
        &mut self,
        x: Var,
        rows: &[usize],
        cols: &[usize],
        weights: &[f64],
    ) -> Result<Var> {
        if rows.len() != cols.len() || rows.len() != weights.len() {
            return Err(Error::shape("pick_sum", rows.len(), cols.len().min(weights.len())));
        }
        let xv = self.value(x);
        let mut acc = 0.0;
        for i in 0..rows.len() {
            if rows[i] >= xv.rows() || cols[i] >= xv.cols() {
                return Err(Error::IndexOutOfRange {
                    context: "pick_sum".into(),
                    index: rows[i].max(cols[i]),
                    bound: xv.rows().min(xv.cols()),
                });
            }
            acc += weights[i] * xv.get(rows[i], cols[i]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            DenseMatrix::scalar(acc),
            Op::PickSum {
                x,
                rows: rows.to_vec(),
                cols: cols.to_vec(),
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Multi-head additive graph attention.
    ///
    /// `wh` holds the projected features `N x (heads * d)`; `att_src` and
    /// `att_dst` are `1 x (heads * d)` attention vectors. `graph` supplies
    /// the neighbourhood of each target row (self loops must be present
    /// when a node should attend to itself). With `concat` the heads are
    /// laid side by side, otherwise they are averaged into `N x d`.
    #[allow(clippy::too_many_arguments)]
    pub fn gat_attention(
        &mut self,
        wh: Var,
        att_src: Var,
        att_dst: Var,
        graph: &Arc<SparseMatrix>,
        heads: usize,
        concat: bool,
        slope: f64,
    ) -> Result<Var> {
        let (value, cache) = attention_forward(
            self.value(wh),
            self.value(att_src),
            self.value(att_dst),
            graph,
            heads,
            concat,
            slope,
        )?;
        let rg = self.rg(wh) || self.rg(att_src) || self.rg(att_dst);
        Ok(self.push(
            value,
            Op::GatAttention {
                wh,
                att_src,
                att_dst,
                graph: Arc::clone(graph),
                heads,
                concat,
                slope,
                cache,
            },
            rg,
        ))
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let n = self.nodes.len();
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape("backward", "1x1 loss", format!("{:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..n).map(|_| None).collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        if self.rg(loss) {
            grads[loss.0] = Some(DenseMatrix::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, contribution: DenseMatrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_scaled(&contribution, 1.0),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut da = DenseMatrix::zeros(va.rows(), va.cols());
                    kernels::gemm_nt(g, vb, &mut da);
                    self.accumulate(grads, *a, da);
                }
                if self.rg(*b) {
                    let mut db = DenseMatrix::zeros(vb.rows(), vb.cols());
                    kernels::gemm_tn(va, g, &mut db);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Spmm(s, d) => {
                let vd = self.value(*d);
                let mut dd = DenseMatrix::zeros(vd.rows(), vd.cols());
                s.spmm_transposed_into(g, &mut dd);
                self.accumulate(grads, *d, dd);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::Relu(a) => {
                let mut da = g.clone();
                for (d, &x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::LeakyRelu(a, slope) => {
                let mut da = g.clone();
                for (d, &x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                    if x <= 0.0 {
                        *d *= slope;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Dropout(a, mask) => {
                let mut da = g.clone();
                for (d, m) in da.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
                self.accumulate(grads, *a, da);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut da = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (o, (p, q)) in da.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let mut da = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let total: f64 = gr.iter().sum();
                    for (o, (ly, q)) in da.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = q - ly.exp() * total;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::CrossEntropy {
                logits,
                rows,
                labels,
                probs,
            } => {
                let lv = self.value(*logits);
                let scale = g.item() / rows.len() as f64;
                let mut dl = DenseMatrix::zeros(lv.rows(), lv.cols());
                for (i, (&r, &y)) in rows.iter().zip(labels).enumerate() {
                    let out = dl.row_mut(r);
                    for (c, o) in out.iter_mut().enumerate() {
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        *o += scale * (probs.get(i, c) - onehot);
                    }
                }
                self.accumulate(grads, *logits, dl);
            }
            Op::KlRows {
                target,
                q,
                rows,
                reduce,
            } => {
                let qv = self.value(*q);
                let mut dq = DenseMatrix::zeros(qv.rows(), qv.cols());
                for (i, &r) in rows.iter().enumerate() {
                    let upstream = match reduce {
                        Reduce::PerRow => g.get(i, 0),
                        Reduce::Sum => g.item(),
                        Reduce::Mean => g.item() / rows.len() as f64,
                    };
                    let (t, qr) = (target.row(r), qv.row(r));
                    let out = dq.row_mut(r);
                    for c in 0..qr.len() {
                        // d/dq of -p ln max(q, eps); zero below the clamp.
                        if qr[c] > ops::KL_EPS {
                            out[c] += upstream * (-t[c] / qr[c]);
                        }
                    }
                }
                self.accumulate(grads, *q, dq);
            }
            Op::PickSum {
                x,
                rows,
                cols,
                weights,
            } => {
                let xv = self.value(*x);
                let mut dx = DenseMatrix::zeros(xv.rows(), xv.cols());
                let up = g.item();
                for i in 0..rows.len() {
                    let cur = dx.get(rows[i], cols[i]);
                    dx.set(rows[i], cols[i], cur + up * weights[i]);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::GatAttention {
                wh,
                att_src,
                att_dst,
                graph,
                heads,
                concat,
                slope,
                cache,
            } => {
                let (dwh, dsrc, ddst) = attention_backward(
                    g,
                    self.value(*wh),
                    self.value(*att_src),
                    self.value(*att_dst),
                    graph,
                    *heads,
                    *concat,
                    *slope,
                    cache,
                );
                self.accumulate(grads, *wh, dwh);
                self.accumulate(grads, *att_src, dsrc);
                self.accumulate(grads, *att_dst, ddst);
            }
        }
    }
}

/// Per-edge, per-head quantities kept for the backward pass. Edge `e`
/// follows the CSR order of the attention graph; entries are laid out as
/// `e * heads + h`.
pub struct AttentionCache {
    /// Pre-activation scores.
    pub scores: Vec<f64>,
    /// Normalised attention coefficients.
    pub alpha: Vec<f64>,
}

/// Forward pass of multi-head graph attention. Returns the aggregated
/// features and the per-edge coefficients.
pub fn attention_forward(
    wh: &DenseMatrix,
    att_src: &DenseMatrix,
    att_dst: &DenseMatrix,
    graph: &SparseMatrix,
    heads: usize,
    concat: bool,
    slope: f64,
) -> Result<(DenseMatrix, AttentionCache)> {
    let (n, width) = wh.shape();
    if heads == 0 || width % heads != 0 {
        return Err(Error::invalid(format!(
            "attention width {width} not divisible by {heads} heads"
        )));
    }
    if att_src.shape() != (1, width) || att_dst.shape() != (1, width) {
        return Err(Error::shape("gat_attention", format!("1x{width}"), format!("{:?}", att_src.shape())));
    }
    if graph.rows() != n || graph.cols() != n {
        return Err(Error::shape("gat_attention", format!("{n}x{n} graph"), format!("{}x{}", graph.rows(), graph.cols())));
    }
    let d = width / heads;
    let (src_score, dst_score) = head_scores(wh, att_src, att_dst, heads);
    let nnz = graph.nnz();
    let mut scores = vec![0.0; nnz * heads];
    let mut alpha = vec![0.0; nnz * heads];
    let out_cols = if concat { width } else { d };
    let mut out = DenseMatrix::zeros(n, out_cols);
    let head_weight = if concat { 1.0 } else { 1.0 / heads as f64 };
    let offsets = graph.offsets();
    for v in 0..n {
        let (nbrs, _) = graph.row(v);
        if nbrs.is_empty() {
            continue;
        }
        let base = offsets[v];
        for h in 0..heads {
            let mut max = f64::NEG_INFINITY;
            for (j, &u) in nbrs.iter().enumerate() {
                let z = dst_score[v * heads + h] + src_score[u * heads + h];
                let e = if z > 0.0 { z } else { slope * z };
                scores[(base + j) * heads + h] = z;
                alpha[(base + j) * heads + h] = e;
                max = max.max(e);
            }
            let mut total = 0.0;
            for j in 0..nbrs.len() {
                let a = &mut alpha[(base + j) * heads + h];
                *a = (*a - max).exp();
                total += *a;
            }
            for j in 0..nbrs.len() {
                alpha[(base + j) * heads + h] /= total;
            }
            let out_off = if concat { h * d } else { 0 };
            for (j, &u) in nbrs.iter().enumerate() {
                let a = alpha[(base + j) * heads + h] * head_weight;
                let src = &wh.row(u)[h * d..(h + 1) * d];
                let dst = &mut out.row_mut(v)[out_off..out_off + d];
                for (o, x) in dst.iter_mut().zip(src) {
                    *o += a * x;
                }
            }
        }
    }
    Ok((out, AttentionCache { scores, alpha }))
}

fn head_scores(
    wh: &DenseMatrix,
    att_src: &DenseMatrix,
    att_dst: &DenseMatrix,
    heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (n, width) = wh.shape();
    let d = width / heads;
    let mut src = vec![0.0; n * heads];
    let mut dst = vec![0.0; n * heads];
    for u in 0..n {
        let row = wh.row(u);
        for h in 0..heads {
            let r = &row[h * d..(h + 1) * d];
            src[u * heads + h] = r.iter().zip(&att_src.data()[h * d..(h + 1) * d]).map(|(a, b)| a * b).sum();
            dst[u * heads + h] = r.iter().zip(&att_dst.data()[h * d..(h + 1) * d]).map(|(a, b)| a * b).sum();
        }
    }
    (src, dst)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    g: &DenseMatrix,
    wh: &DenseMatrix,
    att_src: &DenseMatrix,
    att_dst: &DenseMatrix,
    graph: &SparseMatrix,
    heads: usize,
    concat: bool,
    slope: f64,
    cache: &AttentionCache,
) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let (n, width) = wh.shape();
    let d = width / heads;
    let head_weight = if concat { 1.0 } else { 1.0 / heads as f64 };
    let mut dwh = DenseMatrix::zeros(n, width);
    let mut ds_src = vec![0.0; n * heads];
    let mut ds_dst = vec![0.0; n * heads];
    let offsets = graph.offsets();
    let mut dalpha = Vec::new();
    for v in 0..n {
        let (nbrs, _) = graph.row(v);
        let base = offsets[v];
        for h in 0..heads {
            let out_off = if concat { h * d } else { 0 };
            let gv = &g.row(v)[out_off..out_off + d];
            dalpha.clear();
            for (j, &u) in nbrs.iter().enumerate() {
                let a = cache.alpha[(base + j) * heads + h];
                let src = &wh.row(u)[h * d..(h + 1) * d];
                let da: f64 = gv.iter().zip(src).map(|(x, y)| x * y).sum::<f64>() * head_weight;
                dalpha.push(da);
                let dst = &mut dwh.row_mut(u)[h * d..(h + 1) * d];
                for (o, x) in dst.iter_mut().zip(gv) {
                    *o += a * head_weight * x;
                }
            }
            let dot: f64 = (0..nbrs.len())
                .map(|j| cache.alpha[(base + j) * heads + h] * dalpha[j])
                .sum();
            for (j, &u) in nbrs.iter().enumerate() {
                let k = (base + j) * heads + h;
                let de = cache.alpha[k] * (dalpha[j] - dot);
                let dz = if cache.scores[k] > 0.0 { de } else { slope * de };
                ds_dst[v * heads + h] += dz;
                ds_src[u * heads + h] += dz;
            }
        }
    }
    let mut dsrc = DenseMatrix::zeros(1, width);
    let mut ddst = DenseMatrix::zeros(1, width);
    for u in 0..n {
        for h in 0..heads {
            let (gs, gd) = (ds_src[u * heads + h], ds_dst[u * heads + h]);
            let cols = h * d..(h + 1) * d;
            let whr = &wh.row(u)[cols.clone()];
            for (k, c) in cols.clone().enumerate() {
                dsrc.data_mut()[c] += gs * whr[k];
                ddst.data_mut()[c] += gd * whr[k];
            }
            let row = &mut dwh.row_mut(u)[cols.clone()];
            for (k, c) in cols.enumerate() {
                row[k] += gs * att_src.data()[c] + gd * att_dst.data()[c];
            }
        }
    }
    (dwh, dsrc, ddst)
}
