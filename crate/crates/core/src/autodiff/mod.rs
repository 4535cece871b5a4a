//! Reverse-mode differentiation over dense [`Tensor`]s.
//!
//! A [`Tape`] is an append-only list of nodes. Every operation evaluates
//! eagerly, records its inputs, and returns a [`Var`] handle. The tape is
//! rebuilt for each training step; nothing is reused across steps.
//!
//! ```
//! use tgnn_core::autodiff::Tape;
//! use tgnn_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::row(vec![1.0, -2.0, 3.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

mod backward;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{order_invariant_sum, Tensor};

pub use backward::Gradients;

/// Floor applied to norms in [`Tape::l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Passes `input` where `open`; the closed value is a constant.
    Gate { input: Var, open: Vec<bool> },
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Log1p(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RowSoftmax(Var),
    LogSoftmax(Var),
    /// Rows with `open` divide by their own norm, the rest by `NORM_EPS`.
    L2Normalize { input: Var, open: Vec<bool> },
    Transpose(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Aggregate { input: Var, offsets: Vec<usize>, targets: Vec<usize> },
    SymmetricFromUpper(Var),
    AttentionPool { states: Var, scores: Var, weights: Vec<f64>, fallback: bool },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Per-node neighbor lists in compressed form: the neighbors of node `v` are
/// `targets[offsets[v]..offsets[v + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhoods {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Result of [`Tape::attention_pool`].
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Var,
    /// Readout weight per node.
    pub weights: Vec<f64>,
    /// Which nodes passed the positive-score test.
    pub mask: Vec<bool>,
    /// True when no node survived and uniform mean pooling was used.
    pub fallback: bool,
}

/// Every on/off decision a tape made in program order: one entry per
/// relu, clamp and attention readout. Replaying a pattern turns the
/// piecewise-smooth forward pass into the single smooth piece the pattern
/// was recorded on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatePattern(Vec<Vec<bool>>);

impl GatePattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
enum Gates {
    #[default]
    Free,
    Record(GatePattern),
    Replay { pattern: GatePattern, next: usize },
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    gates: Gates,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that remembers every gate decision; see [`Tape::gate_pattern`].
    pub fn recording() -> Self {
        Self { nodes: Vec::new(), gates: Gates::Record(GatePattern::default()) }
    }

    /// A tape whose gates follow `pattern` instead of their inputs.
    pub fn replaying(pattern: GatePattern) -> Self {
        Self { nodes: Vec::new(), gates: Gates::Replay { pattern, next: 0 } }
    }

    /// Decisions recorded so far by a [`Tape::recording`] tape.
    pub fn gate_pattern(&self) -> Option<&GatePattern> {
        match &self.gates {
            Gates::Record(p) => Some(p),
            _ => None,
        }
    }

    /// The gate mask for the next gated op: `natural` on free and recording
    /// tapes, the next recorded mask on replaying ones.
    fn gate(&mut self, op: &'static str, natural: Vec<bool>) -> Result<Vec<bool>> {
        match &mut self.gates {
            Gates::Free => Ok(natural),
            Gates::Record(p) => {
                p.0.push(natural.clone());
                Ok(natural)
            }
            Gates::Replay { pattern, next } => {
                let Some(mask) = pattern.0.get(*next) else {
                    return Err(Error::GatePattern { op, reason: "pattern exhausted" });
                };
                if mask.len() != natural.len() {
                    return Err(Error::GatePattern { op, reason: "mask length differs" });
                }
                *next += 1;
                Ok(mask.clone())
            }
        }
    }

    fn gated(&mut self, name: &'static str, a: Var, floor: f64) -> Result<Var> {
        let natural = self.value(a).data().iter().map(|&x| x > floor).collect();
        let open = self.gate(name, natural)?;
        let t = self.value(a);
        let data = t.data().iter().zip(&open).map(|(&x, &o)| if o { x } else { floor }).collect();
        let value = Tensor::from_vec(t.rows(), t.cols(), data)?;
        self.push(name, value, Op::Gate { input: a, open }, &[a])
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch { op, left: sa, right: sb });
        }
        Ok(())
    }

    fn row_broadcast(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (sa, sr) = (self.value(a).shape(), self.value(row).shape());
        if sr != (1, sa.1) {
            return Err(Error::ShapeMismatch { op, left: sa, right: sr });
        }
        Ok(())
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(name, value, op, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, row)?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += r[i % cols];
        }
        self.push("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, row)?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v *= r[i % cols];
        }
        self.push("mul_row", value, Op::MulRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.gated("relu", a, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, Op::Softplus(a), |x| {
            x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
        })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), libm::exp)
    }

    /// Natural log. Non-positive inputs yield a `NonFinite` error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), libm::log)
    }

    pub fn log1p(&mut self, a: Var) -> Result<Var> {
        self.unary("log1p", a, Op::Log1p(a), libm::log1p)
    }

    /// `max(a, lo)`; gradient passes only where `a > lo`.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.gated("clamp_min", a, lo)
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::InvalidArgument("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push("mean", value, Op::Mean(a), &[a])
    }

    /// Horizontal concatenation; all parts need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.0 != rows {
                return Err(Error::ShapeMismatch { op: "concat_cols", left: (rows, cols), right: s });
            }
            cols += s.1;
        }
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            for r in 0..rows {
                let dst = r * cols + offset;
                value.data_mut()[dst..dst + t.cols()].copy_from_slice(t.row_slice(r));
            }
            offset += t.cols();
        }
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Vertical concatenation; all parts need the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::ShapeMismatch { op: "concat_rows", left: (rows, cols), right: t.shape() });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut value = t.clone();
        let cols = t.cols();
        for row in value.data_mut().chunks_mut(cols.max(1)) {
            softmax_in_place(row);
        }
        self.push("row_softmax", value, Op::RowSoftmax(a), &[a])
    }

    /// Row-wise `log(softmax(a))`, computed stably.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut value = t.clone();
        let cols = t.cols();
        for row in value.data_mut().chunks_mut(cols.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + libm::log(row.iter().map(|&x| libm::exp(x - m)).sum::<f64>());
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push("log_softmax", value, Op::LogSoftmax(a), &[a])
    }

    /// Divides each row by `max(||row||_2, NORM_EPS)`. Zero rows stay zero.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let cols = self.value(a).cols().max(1);
        let natural = self.value(a).data().chunks(cols).map(|row| row_norm(row) > NORM_EPS).collect();
        let open = self.gate("l2_normalize", natural)?;
        let mut value = self.value(a).clone();
        for (row, &o) in value.data_mut().chunks_mut(cols).zip(&open) {
            let n = if o { row_norm(row) } else { NORM_EPS };
            for x in row.iter_mut() {
                *x /= n;
            }
        }
        self.push("l2_normalize", value, Op::L2Normalize { input: a, open }, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = Tensor::from_vec(rows, cols, self.value(a).data().to_vec())?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            if i >= t.rows() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "gather row {i} out of {} rows",
                    t.rows()
                )));
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let value = Tensor::from_vec(indices.len(), t.cols(), data)?;
        self.push("gather_rows", value, Op::GatherRows(a, indices.to_vec()), &[a])
    }

    /// `out_v = h_v + sum_{u in N(v)} h_u` over the rows of `a`.
    ///
    /// Each entry is summed in sorted order, so relabeling the nodes permutes
    /// the output rows without changing any bits.
    pub fn aggregate(&mut self, a: Var, hood: &Neighborhoods) -> Result<Var> {
        let t = self.value(a);
        let (n, d) = t.shape();
        if hood.offsets.len() != n + 1 {
            return Err(Error::ShapeMismatch {
                op: "aggregate",
                left: t.shape(),
                right: (hood.offsets.len().saturating_sub(1), n),
            });
        }
        let mut value = Tensor::zeros(n, d);
        let mut scratch = Vec::new();
        for v in 0..n {
            let nbrs = &hood.targets[hood.offsets[v]..hood.offsets[v + 1]];
            for j in 0..d {
                scratch.clear();
                scratch.push(t.get(v, j));
                scratch.extend(nbrs.iter().map(|&u| t.get(u, j)));
                value.set(v, j, order_invariant_sum(&mut scratch));
            }
        }
        let op = Op::Aggregate { input: a, offsets: hood.offsets.clone(), targets: hood.targets.clone() };
        self.push("aggregate", value, op, &[a])
    }

    /// Maps a `1 x n(n-1)/2` row of strict-upper-triangle weights (row-major
    /// order) to a symmetric `n x n` matrix with zero diagonal.
    pub fn symmetric_from_upper(&mut self, a: Var, n: usize) -> Result<Var> {
        let t = self.value(a);
        let m = n * n.saturating_sub(1) / 2;
        if t.shape() != (1, m) {
            return Err(Error::ShapeMismatch { op: "symmetric_from_upper", left: t.shape(), right: (1, m) });
        }
        let mut value = Tensor::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                let w = t.data()[k];
                value.set(i, j, w);
                value.set(j, i, w);
                k += 1;
            }
        }
        self.push("symmetric_from_upper", value, Op::SymmetricFromUpper(a), &[a])
    }

    /// `[A, A^2, ..., A^p]` built from repeated [`Tape::matmul`].
    pub fn matrix_power_chain(&mut self, a: Var, p: usize) -> Result<Vec<Var>> {
        let (r, c) = self.value(a).shape();
        if r != c {
            return Err(Error::ShapeMismatch { op: "matrix_power_chain", left: (r, c), right: (c, r) });
        }
        let mut out = Vec::with_capacity(p);
        let mut cur = a;
        for k in 0..p {
            if k > 0 {
                cur = self.matmul(cur, a)?;
            }
            out.push(cur);
        }
        Ok(out)
    }

    /// Attention readout with positive-score pruning.
    ///
    /// `states` is `n x d`, `scores` is `n x 1`. Nodes with score `<= 0` get
    /// weight 0; the rest share a softmax of their scores. If no node
    /// survives, every node gets weight `1/n`. The survivor mask is a
    /// constant for differentiation; pass `frozen_mask` to reuse a mask from
    /// an earlier evaluation.
    pub fn attention_pool(&mut self, states: Var, scores: Var, frozen_mask: Option<&[bool]>) -> Result<Pooled> {
        let (n, d) = self.value(states).shape();
        let s = self.value(scores);
        if s.shape() != (n, 1) || n == 0 {
            return Err(Error::ShapeMismatch { op: "attention_pool", left: (n, d), right: s.shape() });
        }
        let mask: Vec<bool> = match frozen_mask {
            Some(m) if m.len() == n => m.to_vec(),
            Some(m) => {
                return Err(Error::ShapeMismatch { op: "attention_pool", left: (n, 1), right: (m.len(), 1) })
            }
            None => {
                let natural = s.data().iter().map(|&x| x > 0.0).collect();
                self.gate("attention_pool", natural)?
            }
        };
        let s = self.value(scores);
        let fallback = !mask.iter().any(|&m| m);
        let weights = if fallback {
            vec![1.0 / n as f64; n]
        } else {
            let m = s
                .data()
                .iter()
                .zip(&mask)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = s
                .data()
                .iter()
                .zip(&mask)
                .map(|(&x, &keep)| if keep { libm::exp(x - m) } else { 0.0 })
                .collect();
            let mut scratch = exps.clone();
            let denom = order_invariant_sum(&mut scratch);
            exps.into_iter().map(|e| e / denom).collect()
        };
        let h = self.value(states);
        let mut out = Tensor::zeros(1, d);
        let mut scratch = Vec::with_capacity(n);
        for j in 0..d {
            scratch.clear();
            scratch.extend((0..n).map(|v| weights[v] * h.get(v, j)));
            out.data_mut()[j] = order_invariant_sum(&mut scratch);
        }
        let op = Op::AttentionPool { states, scores, weights: weights.clone(), fallback };
        let output = self.push("attention_pool", out, op, &[states, scores])?;
        Ok(Pooled { output, weights, mask, fallback })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn row_norm(row: &[f64]) -> f64 {
    libm::sqrt(row.iter().map(|x| x * x).sum::<f64>())
}

/// Numerically stable softmax of a slice, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - m);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
