//! A small dense reverse-mode autodiff engine over row-major `f64` matrices.
//!
//! A [`Tape`] records every operation as a node; [`Tensor`] is a copyable
//! handle to one of those nodes. Nodes are only ever appended and every
//! operation's parents already exist, so node order is a topological order
//! and [`Tape::backward`] is a single reverse sweep.
//!
//! Binary elementwise operations broadcast the right operand when its row
//! count is 1 or equal, and its column count is 1 or equal (bias rows,
//! per-row columns, scalars).
//!
//! A tape is single-use: build the forward pass, call `backward` once, read
//! the gradients of the leaves, then drop it.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Binary(Binary, Tensor, Tensor),
    Scale(Tensor, f64),
    ConcatCols(Tensor, Tensor),
    GatherRows(Tensor, Arc<[usize]>),
    Relu(Tensor),
    LeakyRelu(Tensor, f64),
    Sigmoid(Tensor),
    Softplus(Tensor),
    SegmentSoftmax(Tensor, Arc<[usize]>),
    SegmentWeightedSum {
        values: Tensor,
        weights: Tensor,
        segments: Arc<[usize]>,
    },
    MeanRows(Tensor),
    /// Keeps `1 / sqrt(var + eps)` per row for the backward pass.
    NormalizeRows(Tensor, Vec<f64>),
    BlockSum(Tensor, usize),
    Sum(Tensor),
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    values: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Shape, values: Vec<f64>, op: Op, requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.len(), values.len());
        self.nodes.push(Node {
            shape,
            values,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Tensor(self.nodes.len() - 1)
    }

    fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        if values.len() != rows * cols {
            return Err(dim_err(format!("{} values for a {rows}x{cols} tensor", values.len())));
        }
        Ok(self.push(Shape::new(rows, cols), values, Op::Leaf, requires_grad))
    }

    /// A trainable leaf; its gradient is available after `backward`.
    pub fn param(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor> {
        self.leaf(rows, cols, values, true)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor> {
        self.leaf(rows, cols, values, false)
    }

    pub fn shape(&self, t: Tensor) -> Shape {
        self.nodes[t.0].shape
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].values
    }

    /// The value of a 1x1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        let n = &self.nodes[t.0];
        assert_eq!(n.shape.len(), 1, "scalar() on a {:?} tensor", n.shape);
        n.values[0]
    }

    pub fn grad(&self, t: Tensor) -> Option<&[f64]> {
        self.grads[t.0].as_deref()
    }

    fn rg(&self, ts: &[Tensor]) -> bool {
        ts.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(dim_err(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                for (o, &y) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Shape::new(m, n), out, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: Binary, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let rows_ok = sb.rows == sa.rows || sb.rows == 1;
        let cols_ok = sb.cols == sa.cols || sb.cols == 1;
        if !rows_ok || !cols_ok {
            return Err(dim_err(format!("cannot broadcast {sb:?} onto {sa:?}")));
        }
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let mut out = Vec::with_capacity(sa.len());
        for i in 0..sa.rows {
            for j in 0..sa.cols {
                let x = av[i * sa.cols + j];
                let y = bv[(i % sb.rows) * sb.cols + j % sb.cols];
                out.push(match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                });
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(sa, out, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let out = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a), out, Op::Scale(a, c), rg)
    }

    /// Joins each row of `a` with the matching row of `b`: `m x p`, `m x q` -> `m x (p + q)`.
    pub fn concat_rows(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.rows != sb.rows {
            return Err(dim_err(format!("concat {sa:?} with {sb:?}")));
        }
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let mut out = Vec::with_capacity(sa.len() + sb.len());
        for i in 0..sa.rows {
            out.extend_from_slice(&av[i * sa.cols..(i + 1) * sa.cols]);
            out.extend_from_slice(&bv[i * sb.cols..(i + 1) * sb.cols]);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Shape::new(sa.rows, sa.cols + sb.cols), out, Op::ConcatCols(a, b), rg))
    }

    /// Row `r` of the output is row `index[r]` of `x`.
    pub fn gather_rows(&mut self, x: Tensor, index: Arc<[usize]>) -> Result<Tensor> {
        let s = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= s.rows) {
            return Err(dim_err(format!("row {bad} out of range for {s:?}")));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(index.len() * s.cols);
        for &r in index.iter() {
            out.extend_from_slice(&xv[r * s.cols..(r + 1) * s.cols]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Shape::new(index.len(), s.cols), out, Op::GatherRows(x, index), rg))
    }

    fn unary(&mut self, x: Tensor, f: impl Fn(f64) -> f64, op: Op) -> Tensor {
        let out = self.nodes[x.0].values.iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x), out, op, rg)
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Tensor, slope: f64) -> Tensor {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Tensor) -> Tensor {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Tensor) -> Tensor {
        self.unary(x, softplus, Op::Softplus(x))
    }

    /// Softmax down each column, normalized separately within each segment
    /// of rows (`segments[r]` is row `r`'s group).
    pub fn segment_softmax(&mut self, scores: Tensor, segments: Arc<[usize]>) -> Result<Tensor> {
        let s = self.shape(scores);
        if segments.len() != s.rows {
            return Err(dim_err(format!("{} segment ids for {} rows", segments.len(), s.rows)));
        }
        let n_seg = segments.iter().max().map_or(0, |m| m + 1);
        let xv = &self.nodes[scores.0].values;
        let mut max = vec![f64::NEG_INFINITY; n_seg * s.cols];
        for (r, &g) in segments.iter().enumerate() {
            for c in 0..s.cols {
                let m = &mut max[g * s.cols + c];
                *m = m.max(xv[r * s.cols + c]);
            }
        }
        let mut out = vec![0.0; s.len()];
        let mut sum = vec![0.0; n_seg * s.cols];
        for (r, &g) in segments.iter().enumerate() {
            for c in 0..s.cols {
                let e = (xv[r * s.cols + c] - max[g * s.cols + c]).exp();
                out[r * s.cols + c] = e;
                sum[g * s.cols + c] += e;
            }
        }
        for (r, &g) in segments.iter().enumerate() {
            for c in 0..s.cols {
                out[r * s.cols + c] /= sum[g * s.cols + c];
            }
        }
        let rg = self.rg(&[scores]);
        Ok(self.push(s, out, Op::SegmentSoftmax(scores, segments), rg))
    }

    /// `out[g, h*d + k] = sum over rows r in segment g of weights[r, h] * values[r, h*d + k]`
    /// where `values` has `H*d` columns and `weights` has `H`. The output has
    /// one row per segment id up to the largest id present, or `n_segments`
    /// rows if that is larger.
    pub fn segment_weighted_sum(
        &mut self,
        values: Tensor,
        weights: Tensor,
        segments: Arc<[usize]>,
        n_segments: usize,
    ) -> Result<Tensor> {
        let (sv, sw) = (self.shape(values), self.shape(weights));
        if sv.rows != sw.rows || segments.len() != sv.rows {
            return Err(dim_err(format!(
                "segment sum over values {sv:?}, weights {sw:?}, {} segment ids",
                segments.len()
            )));
        }
        if sw.cols == 0 || sv.cols % sw.cols != 0 {
            return Err(dim_err(format!(
                "{} value columns do not split into {} weight blocks",
                sv.cols, sw.cols
            )));
        }
        let n_out = n_segments.max(segments.iter().max().map_or(0, |m| m + 1));
        let d = sv.cols / sw.cols;
        let (vv, wv) = (&self.nodes[values.0].values, &self.nodes[weights.0].values);
        let mut out = vec![0.0; n_out * sv.cols];
        for (r, &g) in segments.iter().enumerate() {
            for h in 0..sw.cols {
                let w = wv[r * sw.cols + h];
                for k in 0..d {
                    out[g * sv.cols + h * d + k] += w * vv[r * sv.cols + h * d + k];
                }
            }
        }
        let rg = self.rg(&[values, weights]);
        Ok(self.push(
            Shape::new(n_out, sv.cols),
            out,
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            },
            rg,
        ))
    }

    /// Column means, `m x d` -> `1 x d`.
    pub fn mean_rows(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.shape(x);
        if s.rows == 0 {
            return Err(dim_err("mean over zero rows".into()));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; s.cols];
        for row in xv.chunks_exact(s.cols.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / s.rows as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(&[x]);
        Ok(self.push(Shape::new(1, s.cols), out, Op::MeanRows(x), rg))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`, with the
    /// biased (1/d) variance.
    pub fn normalize_rows(&mut self, x: Tensor, eps: f64) -> Tensor {
        let s = self.shape(x);
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(s.len());
        let mut inv_std = Vec::with_capacity(s.rows);
        let d = s.cols as f64;
        for row in xv.chunks_exact(s.cols.max(1)).take(s.rows) {
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let r = 1.0 / (var + eps).sqrt();
            inv_std.push(r);
            out.extend(row.iter().map(|v| (v - mean) * r));
        }
        let rg = self.rg(&[x]);
        self.push(s, out, Op::NormalizeRows(x, inv_std), rg)
    }

    /// Layer normalization with learned per-column `gain` and `bias` (both `1 x d`).
    pub fn layer_norm(&mut self, x: Tensor, gain: Tensor, bias: Tensor, eps: f64) -> Result<Tensor> {
        let n = self.normalize_rows(x, eps);
        let scaled = self.mul(n, gain)?;
        self.add(scaled, bias)
    }

    /// Sums each run of `cols / blocks` consecutive columns: `m x (B*d)` -> `m x B`.
    pub fn block_sum(&mut self, x: Tensor, blocks: usize) -> Result<Tensor> {
        let s = self.shape(x);
        if blocks == 0 || !s.cols.is_multiple_of(blocks) {
            return Err(dim_err(format!("{} columns into {blocks} blocks", s.cols)));
        }
        let d = s.cols / blocks;
        let xv = &self.nodes[x.0].values;
        let out = xv.chunks_exact(d.max(1)).map(|c| c.iter().sum()).collect::<Vec<f64>>();
        let rg = self.rg(&[x]);
        Ok(self.push(Shape::new(s.rows, blocks), out, Op::BlockSum(x, blocks), rg))
    }

    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let total = self.nodes[x.0].values.iter().sum();
        let rg = self.rg(&[x]);
        self.push(Shape::new(1, 1), vec![total], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Tensor) -> Result<Tensor> {
        let n = self.shape(x).len();
        if n == 0 {
            return Err(dim_err("mean of an empty tensor".into()));
        }
        let s = self.sum(x);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    /// Fills the gradient of every node that `loss` depends on.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        let shape = self.shape(loss);
        if shape.len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {shape:?}")));
        }
        let Tape { nodes, grads } = self;
        grads.iter_mut().for_each(|g| *g = None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            if node.requires_grad {
                propagate(nodes, grads, node, &g);
            }
            grads[i] = Some(g);
        }
        Ok(())
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], t: Tensor, f: impl FnOnce(&mut [f64])) {
    if !nodes[t.0].requires_grad {
        return;
    }
    let len = nodes[t.0].shape.len();
    let g = grads[t.0].get_or_insert_with(|| vec![0.0; len]);
    f(g);
}

/// Pushes `g` (the gradient of `node`'s output) to its parents.
fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let out = &node.values;
    let shape = node.shape;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].shape, nodes[b.0].shape);
            let (m, k, n) = (sa.rows, sa.cols, sb.cols);
            let (av, bv) = (&nodes[a.0].values, &nodes[b.0].values);
            accumulate(nodes, grads, a, |ga| {
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bv[p * n + j];
                        }
                        ga[i * k + p] += s;
                    }
                }
            });
            accumulate(nodes, grads, b, |gb| {
                for i in 0..m {
                    for p in 0..k {
                        let x = av[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += x * g[i * n + j];
                        }
                    }
                }
            });
        }
        &Op::Binary(kind, a, b) => {
            let sb = nodes[b.0].shape;
            let (av, bv) = (&nodes[a.0].values, &nodes[b.0].values);
            let bidx = |i: usize, j: usize| (i % sb.rows) * sb.cols + j % sb.cols;
            accumulate(nodes, grads, a, |ga| {
                for i in 0..shape.rows {
                    for j in 0..shape.cols {
                        let o = i * shape.cols + j;
                        ga[o] += match kind {
                            Binary::Add | Binary::Sub => g[o],
                            Binary::Mul => g[o] * bv[bidx(i, j)],
                        };
                    }
                }
            });
            accumulate(nodes, grads, b, |gb| {
                for i in 0..shape.rows {
                    for j in 0..shape.cols {
                        let o = i * shape.cols + j;
                        gb[bidx(i, j)] += match kind {
                            Binary::Add => g[o],
                            Binary::Sub => -g[o],
                            Binary::Mul => g[o] * av[o],
                        };
                    }
                }
            });
        }
        &Op::Scale(a, c) => accumulate(nodes, grads, a, |ga| {
            ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y);
        }),
        &Op::ConcatCols(a, b) => {
            let (p, q) = (nodes[a.0].shape.cols, nodes[b.0].shape.cols);
            accumulate(nodes, grads, a, |ga| {
                for i in 0..shape.rows {
                    for j in 0..p {
                        ga[i * p + j] += g[i * (p + q) + j];
                    }
                }
            });
            accumulate(nodes, grads, b, |gb| {
                for i in 0..shape.rows {
                    for j in 0..q {
                        gb[i * q + j] += g[i * (p + q) + p + j];
                    }
                }
            });
        }
        Op::GatherRows(x, index) => {
            let d = shape.cols;
            accumulate(nodes, grads, *x, |gx| {
                for (r, &src) in index.iter().enumerate() {
                    for k in 0..d {
                        gx[src * d + k] += g[r * d + k];
                    }
                }
            });
        }
        &Op::Relu(x) => {
            let xv = &nodes[x.0].values;
            accumulate(nodes, grads, x, |gx| {
                for ((o, &v), &gi) in gx.iter_mut().zip(xv).zip(g) {
                    if v > 0.0 {
                        *o += gi;
                    }
                }
            });
        }
        &Op::LeakyRelu(x, slope) => {
            let xv = &nodes[x.0].values;
            accumulate(nodes, grads, x, |gx| {
                for ((o, &v), &gi) in gx.iter_mut().zip(xv).zip(g) {
                    *o += if v > 0.0 { gi } else { slope * gi };
                }
            });
        }
        &Op::Sigmoid(x) => accumulate(nodes, grads, x, |gx| {
            for ((o, &y), &gi) in gx.iter_mut().zip(out).zip(g) {
                *o += gi * y * (1.0 - y);
            }
        }),
        &Op::Softplus(x) => {
            let xv = &nodes[x.0].values;
            accumulate(nodes, grads, x, |gx| {
                for ((o, &v), &gi) in gx.iter_mut().zip(xv).zip(g) {
                    *o += gi * sigmoid(v);
                }
            });
        }
        Op::SegmentSoftmax(x, segments) => {
            let c = shape.cols;
            let n_seg = segments.iter().max().map_or(0, |m| m + 1);
            // dot[g, h] = sum over rows in g of grad * y
            let mut dot = vec![0.0; n_seg * c];
            for (r, &s) in segments.iter().enumerate() {
                for h in 0..c {
                    dot[s * c + h] += g[r * c + h] * out[r * c + h];
                }
            }
            accumulate(nodes, grads, *x, |gx| {
                for (r, &s) in segments.iter().enumerate() {
                    for h in 0..c {
                        let o = r * c + h;
                        gx[o] += out[o] * (g[o] - dot[s * c + h]);
                    }
                }
            });
        }
        Op::SegmentWeightedSum {
            values,
            weights,
            segments,
        } => {
            let (sv, sw) = (nodes[values.0].shape, nodes[weights.0].shape);
            let d = sv.cols / sw.cols;
            let (vv, wv) = (&nodes[values.0].values, &nodes[weights.0].values);
            accumulate(nodes, grads, *values, |gv| {
                for (r, &s) in segments.iter().enumerate() {
                    for h in 0..sw.cols {
                        let w = wv[r * sw.cols + h];
                        for k in 0..d {
                            gv[r * sv.cols + h * d + k] += w * g[s * sv.cols + h * d + k];
                        }
                    }
                }
            });
            accumulate(nodes, grads, *weights, |gw| {
                for (r, &s) in segments.iter().enumerate() {
                    for h in 0..sw.cols {
                        let mut acc = 0.0;
                        for k in 0..d {
                            acc += vv[r * sv.cols + h * d + k] * g[s * sv.cols + h * d + k];
                        }
                        gw[r * sw.cols + h] += acc;
                    }
                }
            });
        }
        &Op::MeanRows(x) => {
            let sx = nodes[x.0].shape;
            let inv = 1.0 / sx.rows as f64;
            accumulate(nodes, grads, x, |gx| {
                for i in 0..sx.rows {
                    for j in 0..sx.cols {
                        gx[i * sx.cols + j] += g[j] * inv;
                    }
                }
            });
        }
        Op::NormalizeRows(x, inv_std) => {
            let d = shape.cols;
            accumulate(nodes, grads, *x, |gx| {
                for (i, &r) in inv_std.iter().enumerate() {
                    let gr = &g[i * d..(i + 1) * d];
                    let yr = &out[i * d..(i + 1) * d];
                    let mean_g = gr.iter().sum::<f64>() / d as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for k in 0..d {
                        gx[i * d + k] += r * (gr[k] - mean_g - yr[k] * mean_gy);
                    }
                }
            });
        }
        &Op::BlockSum(x, blocks) => {
            let sx = nodes[x.0].shape;
            let d = sx.cols / blocks;
            accumulate(nodes, grads, x, |gx| {
                for (o, gi) in gx.iter_mut().enumerate() {
                    let (i, j) = (o / sx.cols, o % sx.cols);
                    *gi += g[i * blocks + j / d];
                }
            });
        }
        &Op::Sum(x) => accumulate(nodes, grads, x, |gx| {
            gx.iter_mut().for_each(|v| *v += g[0]);
        }),
    }
}
