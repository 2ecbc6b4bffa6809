//! Tape-based reverse-mode differentiation over [`Mat`] values.
//!
//! Every operation appends a node holding its output and whatever it needs
//! for the backward pass. Parameters enter as borrowed leaves so a forward
//! pass never copies model weights.

use std::borrow::Cow;

use crate::tensor::{gemm, Mat};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softplus(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SelectRows {
        a: Var,
        rows: Vec<usize>,
    },
    ScatterRows {
        a: Var,
        rows: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        a: Var,
        start: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    Dropout {
        a: Var,
        mask: Vec<f64>,
    },
    MaskedSoftmax {
        a: Var,
        mask: Vec<bool>,
    },
    LogFloor {
        a: Var,
        floor: f64,
    },
    WeightedSum {
        a: Var,
        weights: Vec<f64>,
    },
    CrossEntropyRows {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node<'a> {
    value: Cow<'a, Mat>,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients indexed by [`Var`]; absent entries are zero.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads[v.0].take()
    }
}

fn accumulate(slot: &mut Option<Mat>, rows: usize, cols: usize) -> &mut Mat {
    slot.get_or_insert_with(|| Mat::zeros(rows, cols))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf that borrows its value.
    pub fn param(&mut self, value: &'a Mat) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "not a scalar");
        m.data[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.rows, vb.cols);
        gemm(va, false, vb, false, &mut out, 0.0);
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.rows, vb.rows);
        gemm(va, false, vb, true, &mut out, 0.0);
        self.push(out, Op::MatMulBT(a, b), &[a, b])
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        Mat::from_vec(va.rows, va.cols, data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Mat {
        let va = self.value(a);
        Mat::from_vec(va.rows, va.cols, va.data.iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!((vr.rows, vr.cols), (1, va.cols), "add_row shape");
        let mut out = va.clone();
        for r in 0..out.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&vr.data) {
                *x += b;
            }
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.map(a, |x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.map(a, gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    /// `log(1 + exp(a))`, elementwise.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.map(a, softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let n = vx.cols;
        assert_eq!((vg.len(), vb.len()), (n, n), "layer_norm parameter width");
        let mut out = Mat::zeros(vx.rows, n);
        let mut xhat = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; vx.rows];
        for r in 0..vx.rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = s;
            for c in 0..n {
                let h = (row[c] - mean) * s;
                xhat[r * n + c] = h;
                out.data[r * n + c] = h * vg.data[c] + vb.data[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let vt = self.value(table);
        let mut out = Mat::zeros(ids.len(), vt.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(vt.row(id));
        }
        self.push(out, Op::Gather { table, ids }, &[table])
    }

    /// Output row `i` is row `rows[i]` of `a`; rows may repeat.
    pub fn select_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let va = self.value(a);
        let mut out = Mat::zeros(rows.len(), va.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(va.row(r));
        }
        self.push(out, Op::SelectRows { a, rows }, &[a])
    }

    /// Places row `i` of `a` at output row `rows[i]` in a zero matrix with
    /// `total` rows. Target rows must be distinct.
    pub fn scatter_rows(&mut self, a: Var, rows: Vec<usize>, total: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.rows, rows.len(), "scatter_rows length");
        let mut out = Mat::zeros(total, va.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(va.row(i));
        }
        self.push(out, Op::ScatterRows { a, rows }, &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + vp.cols].copy_from_slice(vp.row(r));
            }
            offset += vp.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&vp.data);
            rows += vp.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        assert!(start + len <= va.cols, "slice_cols out of range");
        let mut out = Mat::zeros(va.rows, len);
        for r in 0..va.rows {
            out.row_mut(r).copy_from_slice(&va.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { a, start }, &[a])
    }

    /// Multi-head scaled dot-product attention over a batch of equal-length
    /// sequences stacked row-wise. Keys with `key_mask == false` receive no
    /// attention; every sequence must have at least one valid key.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, heads: usize, key_mask: &[bool]) -> Var {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let (n_rows, width) = vq.shape();
        assert_eq!(vk.shape(), (n_rows, width), "attention key shape");
        assert_eq!(vv.shape(), (n_rows, width), "attention value shape");
        assert_eq!(key_mask.len(), n_rows, "attention mask length");
        assert!(seq_len > 0 && n_rows % seq_len == 0, "attention sequence length");
        assert_eq!(width % heads, 0, "width divisible by heads");
        let head_dim = width / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let n_seq = n_rows / seq_len;
        let mut probs = vec![0.0; n_seq * heads * seq_len * seq_len];
        let mut out = Mat::zeros(n_rows, width);
        let mut scores = vec![0.0; seq_len];
        for s in 0..n_seq {
            let base = s * seq_len;
            for h in 0..heads {
                let off = h * head_dim;
                for i in 0..seq_len {
                    let qi = &vq.row(base + i)[off..off + head_dim];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..seq_len {
                        if key_mask[base + j] {
                            let kj = &vk.row(base + j)[off..off + head_dim];
                            let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                            scores[j] = dot * scale;
                            max = max.max(scores[j]);
                        }
                    }
                    assert!(max.is_finite(), "attention row without valid keys");
                    let p = &mut probs[((s * heads + h) * seq_len + i) * seq_len..][..seq_len];
                    let mut total = 0.0;
                    for j in 0..seq_len {
                        if key_mask[base + j] {
                            p[j] = (scores[j] - max).exp();
                            total += p[j];
                        }
                    }
                    let orow = &mut out.data[(base + i) * width + off..][..head_dim];
                    for j in 0..seq_len {
                        if p[j] != 0.0 {
                            p[j] /= total;
                            let vj = &vv.row(base + j)[off..off + head_dim];
                            for (o, x) in orow.iter_mut().zip(vj) {
                                *o += p[j] * x;
                            }
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            },
            &[q, k, v],
        )
    }

    /// Multiplies elementwise by a precomputed inverted-dropout mask.
    pub fn dropout(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let va = self.value(a);
        assert_eq!(mask.len(), va.len(), "dropout mask length");
        let data = va.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Mat::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Dropout { a, mask }, &[a])
    }

    /// Softmax down a single column, restricted to rows where `mask` is
    /// true; masked rows come out as exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let va = self.value(a);
        assert_eq!(va.cols, 1, "masked_softmax expects a column");
        assert_eq!(mask.len(), va.rows, "masked_softmax mask length");
        let max = va
            .data
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, |acc, (&x, _)| acc.max(x));
        assert!(max.is_finite(), "masked_softmax needs a valid finite entry");
        let mut out = Mat::zeros(va.rows, 1);
        let mut total = 0.0;
        for (i, (&x, &m)) in va.data.iter().zip(&mask).enumerate() {
            if m {
                out.data[i] = (x - max).exp();
                total += out.data[i];
            }
        }
        out.scale(1.0 / total);
        self.push(out, Op::MaskedSoftmax { a, mask }, &[a])
    }

    /// `log(max(a, floor))`, elementwise.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        let out = self.map(a, |x| x.max(floor).ln());
        self.push(out, Op::LogFloor { a, floor }, &[a])
    }

    /// Scalar `sum_i weights[i] * a_i` over the flattened matrix.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Var {
        let va = self.value(a);
        assert_eq!(weights.len(), va.len(), "weighted_sum length");
        let total = va.data.iter().zip(&weights).map(|(x, w)| x * w).sum();
        self.push(Mat::scalar(total), Op::WeightedSum { a, weights }, &[a])
    }

    /// Mean over rows of `-log softmax(logits_r)[targets_r]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let vl = self.value(logits);
        assert_eq!(vl.rows, targets.len(), "cross_entropy_rows length");
        assert!(vl.rows > 0, "cross_entropy_rows needs a row");
        let mut probs = vec![0.0; vl.len()];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = vl.row(r);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let p = &mut probs[r * vl.cols..(r + 1) * vl.cols];
            let mut total = 0.0;
            for (pi, &x) in p.iter_mut().zip(row) {
                *pi = (x - max).exp();
                total += *pi;
            }
            for pi in p.iter_mut() {
                *pi /= total;
            }
            loss += -(row[t] - max - total.ln());
        }
        let out = Mat::scalar(loss / targets.len() as f64);
        self.push(
            out,
            Op::CrossEntropyRows {
                logits,
                targets,
                probs,
            },
            &[logits],
        )
    }

    /// Back-propagates from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Mat::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Mat>], v: Var) -> &'g mut Mat {
        let value = self.value(v);
        accumulate(&mut grads[v.0], value.rows, value.cols)
    }

    fn backward_node(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let out = &*self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let vb = self.value(*b);
                    gemm(g, false, vb, true, self.grad_slot(grads, *a), 1.0);
                }
                if self.wants(*b) {
                    let va = self.value(*a);
                    gemm(va, true, g, false, self.grad_slot(grads, *b), 1.0);
                }
            }
            Op::MatMulBT(a, b) => {
                if self.wants(*a) {
                    let vb = self.value(*b);
                    gemm(g, false, vb, false, self.grad_slot(grads, *a), 1.0);
                }
                if self.wants(*b) {
                    let va = self.value(*a);
                    gemm(g, true, va, false, self.grad_slot(grads, *b), 1.0);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        self.grad_slot(grads, v).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    self.grad_slot(grads, *a).add_assign(g);
                }
                if self.wants(*b) {
                    let slot = self.grad_slot(grads, *b);
                    for (s, x) in slot.data.iter_mut().zip(&g.data) {
                        *s -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.wants(v) {
                        let vo = self.value(other);
                        let slot = self.grad_slot(grads, v);
                        for ((s, x), o) in slot.data.iter_mut().zip(&g.data).zip(&vo.data) {
                            *s += x * o;
                        }
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    self.grad_slot(grads, *a).add_assign(g);
                }
                if self.wants(*row) {
                    let slot = self.grad_slot(grads, *row);
                    for r in 0..g.rows {
                        for (s, x) in slot.data.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.wants(*a) {
                    let slot = self.grad_slot(grads, *a);
                    for (d, x) in slot.data.iter_mut().zip(&g.data) {
                        *d += s * x;
                    }
                }
            }
            Op::Tanh(a) => self.unary_from_output(*a, g, out, grads, |y| 1.0 - y * y),
            Op::Sigmoid(a) => self.unary_from_output(*a, g, out, grads, |y| y * (1.0 - y)),
            Op::Gelu(a) => self.unary_from_input(*a, g, grads, gelu_grad),
            Op::Softplus(a) => self.unary_from_input(*a, g, grads, sigmoid),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = g.cols;
                let vg = self.value(*gamma);
                if self.wants(*gamma) {
                    let slot = self.grad_slot(grads, *gamma);
                    for (i, gv) in g.data.iter().enumerate() {
                        slot.data[i % n] += gv * xhat[i];
                    }
                }
                if self.wants(*beta) {
                    let slot = self.grad_slot(grads, *beta);
                    for (i, gv) in g.data.iter().enumerate() {
                        slot.data[i % n] += gv;
                    }
                }
                if self.wants(*x) {
                    let slot = self.grad_slot(grads, *x);
                    let mut dxhat = vec![0.0; n];
                    for r in 0..g.rows {
                        let grow = g.row(r);
                        let hrow = &xhat[r * n..(r + 1) * n];
                        for c in 0..n {
                            dxhat[c] = grow[c] * vg.data[c];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dh = dxhat.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        let srow = slot.row_mut(r);
                        for c in 0..n {
                            srow[c] += rstd[r] * (dxhat[c] - mean_d - hrow[c] * mean_dh);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                if self.wants(*table) {
                    let slot = self.grad_slot(grads, *table);
                    for (i, &id) in ids.iter().enumerate() {
                        for (s, x) in slot.row_mut(id).iter_mut().zip(g.row(i)) {
                            *s += x;
                        }
                    }
                }
            }
            Op::SelectRows { a, rows } => {
                if self.wants(*a) {
                    let slot = self.grad_slot(grads, *a);
                    for (i, &r) in rows.iter().enumerate() {
                        for (s, x) in slot.row_mut(r).iter_mut().zip(g.row(i)) {
                            *s += x;
                        }
                    }
                }
            }
            Op::ScatterRows { a, rows } => {
                if self.wants(*a) {
                    let slot = self.grad_slot(grads, *a);
                    for (i, &r) in rows.iter().enumerate() {
                        for (s, x) in slot.row_mut(i).iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    if self.wants(p) {
                        let slot = self.grad_slot(grads, p);
                        for r in 0..g.rows {
                            for (s, x) in slot.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + cols]) {
                                *s += x;
                            }
                        }
                    }
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.wants(p) {
                        let slot = self.grad_slot(grads, p);
                        for (s, x) in slot.data.iter_mut().zip(&g.data[offset..offset + len]) {
                            *s += x;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceCols { a, start } => {
                if self.wants(*a) {
                    let slot = self.grad_slot(grads, *a);
                    for r in 0..g.rows {
                        for (s, x) in slot.row_mut(r)[*start..*start + g.cols].iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *seq_len, *heads, probs, g, grads),
            Op::Dropout { a, mask } => {
                if self.wants(*a) {
                    let slot = self.grad_slot(grads, *a);
                    for ((s, x), m) in slot.data.iter_mut().zip(&g.data).zip(mask) {
                        *s += x * m;
                    }
                }
            }
            Op::MaskedSoftmax { a, mask } => {
                if self.wants(*a) {
                    let dot: f64 = out.data.iter().zip(&g.data).map(|(p, d)| p * d).sum();
                    let slot = self.grad_slot(grads, *a);
                    for i in 0..out.rows {
                        if mask[i] {
                            slot.data[i] += out.data[i] * (g.data[i] - dot);
                        }
                    }
                }
            }
            Op::LogFloor { a, floor } => {
                let floor = *floor;
                self.unary_from_input(*a, g, grads, |x| if x > floor { 1.0 / x } else { 0.0 });
            }
            Op::WeightedSum { a, weights } => {
                if self.wants(*a) {
                    let gs = g.data[0];
                    let slot = self.grad_slot(grads, *a);
                    for (s, w) in slot.data.iter_mut().zip(weights) {
                        *s += gs * w;
                    }
                }
            }
            Op::CrossEntropyRows {
                logits,
                targets,
                probs,
            } => {
                if self.wants(*logits) {
                    let scale = g.data[0] / targets.len() as f64;
                    let slot = self.grad_slot(grads, *logits);
                    let cols = slot.cols;
                    for (r, &t) in targets.iter().enumerate() {
                        let srow = slot.row_mut(r);
                        for c in 0..cols {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            srow[c] += scale * (probs[r * cols + c] - onehot);
                        }
                    }
                }
            }
        }
    }

    fn unary_from_output(&self, a: Var, g: &Mat, out: &Mat, grads: &mut [Option<Mat>], d: impl Fn(f64) -> f64) {
        if self.wants(a) {
            let slot = self.grad_slot(grads, a);
            for ((s, x), y) in slot.data.iter_mut().zip(&g.data).zip(&out.data) {
                *s += x * d(*y);
            }
        }
    }

    fn unary_from_input(&self, a: Var, g: &Mat, grads: &mut [Option<Mat>], d: impl Fn(f64) -> f64) {
        if self.wants(a) {
            let va = self.value(a);
            let mut local = Mat::zeros(va.rows, va.cols);
            for ((l, x), i) in local.data.iter_mut().zip(&g.data).zip(&va.data) {
                *l = x * d(*i);
            }
            self.grad_slot(grads, a).add_assign(&local);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        heads: usize,
        probs: &[f64],
        g: &Mat,
        grads: &mut [Option<Mat>],
    ) {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let (n_rows, width) = vq.shape();
        let head_dim = width / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut dq = Mat::zeros(n_rows, width);
        let mut dk = Mat::zeros(n_rows, width);
        let mut dv = Mat::zeros(n_rows, width);
        let mut dp = vec![0.0; seq_len];
        for s in 0..n_rows / seq_len {
            let base = s * seq_len;
            for h in 0..heads {
                let off = h * head_dim;
                for i in 0..seq_len {
                    let p = &probs[((s * heads + h) * seq_len + i) * seq_len..][..seq_len];
                    let go = &g.row(base + i)[off..off + head_dim];
                    let mut dot = 0.0;
                    for j in 0..seq_len {
                        if p[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let vj = &vv.row(base + j)[off..off + head_dim];
                        dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += p[j] * dp[j];
                        let dvj = &mut dv.data[(base + j) * width + off..][..head_dim];
                        for (d, x) in dvj.iter_mut().zip(go) {
                            *d += p[j] * x;
                        }
                    }
                    for j in 0..seq_len {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - dot) * scale;
                        let kj = &vk.row(base + j)[off..off + head_dim];
                        let dqi = &mut dq.data[(base + i) * width + off..][..head_dim];
                        for (d, x) in dqi.iter_mut().zip(kj) {
                            *d += ds * x;
                        }
                        let qi = &vq.row(base + i)[off..off + head_dim];
                        let dkj = &mut dk.data[(base + j) * width + off..][..head_dim];
                        for (d, x) in dkj.iter_mut().zip(qi) {
                            *d += ds * x;
                        }
                    }
                }
            }
        }
        for (var, d) in [(q, dq), (k, dk), (v, dv)] {
            if self.wants(var) {
                self.grad_slot(grads, var).add_assign(&d);
            }
        }
    }
}
