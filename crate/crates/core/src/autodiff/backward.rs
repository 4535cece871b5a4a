use alloc::vec;
use alloc::vec::Vec;

use super::{sigmoid, row_norm, Op, Tape, Var, NORM_EPS};
use crate::error::{Error, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, Tensor};

/// Gradients from one [`Tape::backward`] call, indexed by [`Var`].
///
/// Only nodes that require a gradient and lie on a path to the loss have an
/// entry.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of nodes holding a gradient.
    pub fn populated(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], tape: &Tape, v: Var, g: Tensor) {
    if !tape.nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("zip_map of equal shapes")
}

/// Sums the rows of `g` into a `1 x c` tensor.
fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row_slice(r)) {
            *o += x;
        }
    }
    out
}

impl Tape {
    /// Reverse sweep from a 1x1 `loss`. Gradients of nodes used more than once
    /// accumulate additively. The sweep visits nodes in reverse creation
    /// order, so identical tapes give bitwise-identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss { shape });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    let mut ga = Tensor::zeros(m, k);
                    matmul_bt_into(g.data(), tb.data(), ga.data_mut(), m, n, k);
                    accumulate(grads, self, *a, ga);
                }
                if self.requires_grad(*b) {
                    let mut gb = Tensor::zeros(k, n);
                    matmul_at_into(ta.data(), g.data(), gb.data_mut(), m, k, n);
                    accumulate(grads, self, *b, gb);
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, self, *a, g.clone());
                accumulate(grads, self, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, self, *a, g.clone());
                if self.requires_grad(*row) {
                    accumulate(grads, self, *row, column_sums(g));
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    accumulate(grads, self, *a, zip_map(g, val(*b), |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    accumulate(grads, self, *b, zip_map(g, val(*a), |x, y| x * y));
                }
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (val(*a), val(*row));
                let cols = ta.cols();
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for (i, x) in ga.data_mut().iter_mut().enumerate() {
                        *x *= tr.data()[i % cols];
                    }
                    accumulate(grads, self, *a, ga);
                }
                if self.requires_grad(*row) {
                    let mut gr = Tensor::zeros(1, cols);
                    for (i, (x, y)) in g.data().iter().zip(ta.data()).enumerate() {
                        gr.data_mut()[i % cols] += x * y;
                    }
                    accumulate(grads, self, *row, gr);
                }
            }
            Op::Scale(a, c) => accumulate(grads, self, *a, g.map(|x| x * c)),
            Op::AddScalar(a) => accumulate(grads, self, *a, g.clone()),
            Op::Gate { input, open, .. } => {
                let data = g.data().iter().zip(open).map(|(&x, &o)| if o { x } else { 0.0 }).collect();
                accumulate(grads, self, *input, Tensor::from_vec(g.rows(), g.cols(), data).expect("gate keeps shape"))
            }
            Op::Sigmoid(a) => accumulate(grads, self, *a, zip_map(g, out, |x, s| x * s * (1.0 - s))),
            Op::Softplus(a) => accumulate(grads, self, *a, zip_map(g, val(*a), |x, y| x * sigmoid(y))),
            Op::Exp(a) => accumulate(grads, self, *a, zip_map(g, out, |x, e| x * e)),
            Op::Log(a) => accumulate(grads, self, *a, zip_map(g, val(*a), |x, y| x / y)),
            Op::Log1p(a) => accumulate(grads, self, *a, zip_map(g, val(*a), |x, y| x / (1.0 + y))),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, self, *a, Tensor::full(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, self, *a, Tensor::full(r, c, g.item() / (r * c) as f64));
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let (r, c) = val(*p).shape();
                    if self.requires_grad(*p) {
                        let mut gp = Tensor::zeros(r, c);
                        for row in 0..r {
                            let src = row * total + offset;
                            gp.data_mut()[row * c..(row + 1) * c].copy_from_slice(&g.data()[src..src + c]);
                        }
                        accumulate(grads, self, *p, gp);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = val(*p).shape();
                    if self.requires_grad(*p) {
                        let gp = Tensor::from_vec(r, c, g.data()[offset..offset + r * c].to_vec())
                            .expect("concat slice");
                        accumulate(grads, self, *p, gp);
                    }
                    offset += r * c;
                }
            }
            Op::RowSoftmax(a) => {
                let cols = out.cols().max(1);
                let mut ga = g.clone();
                for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(out.data().chunks(cols)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    for (x, y) in grow.iter_mut().zip(yrow) {
                        *x = y * (*x - dot);
                    }
                }
                accumulate(grads, self, *a, ga);
            }
            Op::LogSoftmax(a) => {
                let cols = out.cols().max(1);
                let mut ga = g.clone();
                for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(out.data().chunks(cols)) {
                    let total: f64 = grow.iter().sum();
                    for (x, y) in grow.iter_mut().zip(yrow) {
                        *x -= libm::exp(*y) * total;
                    }
                }
                accumulate(grads, self, *a, ga);
            }
            Op::L2Normalize { input: a, open } => {
                let ta = val(*a);
                let cols = ta.cols().max(1);
                let mut ga = g.clone();
                for (((grow, yrow), xrow), &o) in
                    ga.data_mut().chunks_mut(cols).zip(out.data().chunks(cols)).zip(ta.data().chunks(cols)).zip(open)
                {
                    if o {
                        let n = row_norm(xrow);
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for (x, y) in grow.iter_mut().zip(yrow) {
                            *x = (*x - y * dot) / n;
                        }
                    } else {
                        for x in grow.iter_mut() {
                            *x /= NORM_EPS;
                        }
                    }
                }
                accumulate(grads, self, *a, ga);
            }
            Op::Transpose(a) => accumulate(grads, self, *a, g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, self, *a, Tensor::from_vec(r, c, g.data().to_vec()).expect("reshape"));
            }
            Op::GatherRows(a, indices) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, x) in ga.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *o += x;
                    }
                }
                accumulate(grads, self, *a, ga);
            }
            Op::Aggregate { input, offsets, targets } => {
                // The neighborhood relation is symmetric, so the adjoint has
                // the same shape as the forward map.
                let mut ga = g.clone();
                let d = g.cols();
                for u in 0..g.rows() {
                    for &v in &targets[offsets[u]..offsets[u + 1]] {
                        for j in 0..d {
                            ga.data_mut()[u * d + j] += g.get(v, j);
                        }
                    }
                }
                accumulate(grads, self, *input, ga);
            }
            Op::SymmetricFromUpper(a) => {
                let n = out.rows();
                let mut ga = Tensor::zeros(1, val(*a).cols());
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        ga.data_mut()[k] = g.get(i, j) + g.get(j, i);
                        k += 1;
                    }
                }
                accumulate(grads, self, *a, ga);
            }
            Op::AttentionPool { states, scores, weights, fallback } => {
                let h = val(*states);
                let (n, d) = h.shape();
                if self.requires_grad(*states) {
                    let mut gh = Tensor::zeros(n, d);
                    for v in 0..n {
                        for j in 0..d {
                            gh.set(v, j, weights[v] * g.data()[j]);
                        }
                    }
                    accumulate(grads, self, *states, gh);
                }
                if !fallback && self.requires_grad(*scores) {
                    // d out / d a_v = h_v, then through the masked softmax.
                    let da: Vec<f64> = (0..n)
                        .map(|v| h.row_slice(v).iter().zip(g.data()).map(|(x, y)| x * y).sum())
                        .collect();
                    let mean: f64 = weights.iter().zip(&da).map(|(a, b)| a * b).sum();
                    let gs: Vec<f64> = weights.iter().zip(&da).map(|(a, b)| a * (b - mean)).collect();
                    accumulate(grads, self, *scores, Tensor::from_vec(n, 1, gs).expect("scores"));
                }
            }
        }
    }
}
