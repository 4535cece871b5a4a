//! Random-walk kernel encoder with trainable hidden graphs.
//!
//! For unlabeled graphs the direct-product adjacency is a Kronecker product,
//! and `(A ⊗ A')^p = A^p ⊗ A'^p`, so the length-`p` common-walk count
//! factorizes:
//!
//! ```text
//! k_p(G, G') = e^T (A ⊗ A')^p e = (e^T A^p e) * (e^T A'^p e)
//! ```
//!
//! Each hidden graph therefore contributes its own walk counts `s_p(A'_i)`,
//! scaled by the input's counts `s_p(A)`. The `N x (P+1)` feature matrix `H`
//! (`H[i][p] = k_p(G, G'_i)`) is flattened row-major and passed through one
//! fully connected layer. The kernel reads graph structure only.
//!
//! [`direct_product_oracle`] builds the product graph explicitly and serves
//! as the independent reference for the factorized path.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mpnn::GraphEmbedding;
use crate::params::{glorot_uniform, uniform, Bindings, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Largest product graph [`direct_product_oracle`] will materialize.
pub const DEFAULT_PRODUCT_CAP: usize = 4096;

/// Trainable hidden graphs. Hidden graph `i` has `sizes[i]` nodes and a free
/// weight row of length `n(n-1)/2` (strict upper triangle, row-major); its
/// adjacency is `relu` of the symmetrized weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenGraphSet {
    pub sizes: Vec<usize>,
    pub weights: Vec<ParamId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelParams {
    pub hidden: HiddenGraphSet,
    pub walk_length: usize,
    /// `N(P+1) x d`.
    pub head_weight: ParamId,
    /// `1 x d`.
    pub head_bias: ParamId,
    /// Feed `log(1 + H)` to the head instead of raw counts.
    pub log1p: bool,
    pub output_dim: usize,
}

/// `H` for one input graph.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFeatures {
    pub h: Tensor,
}

impl HiddenGraphSet {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Effective (nonnegative, symmetric, zero-diagonal) adjacency of hidden
    /// graph `i`.
    pub fn adjacency(&self, store: &ParamStore, i: usize) -> Tensor {
        let n = self.sizes[i];
        let w = store.value(self.weights[i]);
        let mut a = Tensor::zeros(n, n);
        let mut k = 0;
        for r in 0..n {
            for c in r + 1..n {
                let x = w.data()[k].max(0.0);
                a.set(r, c, x);
                a.set(c, r, x);
                k += 1;
            }
        }
        a
    }
}

impl KernelParams {
    /// `count` hidden graphs of `hidden_size` nodes with weights drawn from
    /// `uniform(0.1, 1.0)`, and a Glorot-initialized head.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        count: usize,
        hidden_size: usize,
        walk_length: usize,
        output_dim: usize,
        log1p: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if count == 0 || hidden_size < 2 || walk_length == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel needs count >= 1, hidden size >= 2, P >= 1, d >= 1 (got {count}, {hidden_size}, {walk_length}, {output_dim})"
            )));
        }
        let sizes = vec![hidden_size; count];
        let weights = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| store.add(format!("{prefix}.hidden{i}"), uniform(rng, 1, n * (n - 1) / 2, 0.1, 1.0)))
            .collect();
        let width = count * (walk_length + 1);
        let head_weight = store.add(format!("{prefix}.head.w"), glorot_uniform(rng, width, output_dim));
        let head_bias = store.add(format!("{prefix}.head.b"), Tensor::zeros(1, output_dim));
        Ok(Self { hidden: HiddenGraphSet { sizes, weights }, walk_length, head_weight, head_bias, log1p, output_dim })
    }

    pub fn feature_width(&self) -> usize {
        self.hidden.len() * (self.walk_length + 1)
    }

    /// `1 x N(P+1)` row of hidden-graph walk counts `s_p(A'_i)`, on the tape.
    fn hidden_counts(&self, tape: &mut Tape, b: &Bindings) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.feature_width());
        for (i, &n) in self.hidden.sizes.iter().enumerate() {
            let sym = tape.symmetric_from_upper(b[self.hidden.weights[i]], n)?;
            let adj = tape.relu(sym)?;
            parts.push(tape.constant(Tensor::scalar(n as f64)));
            for power in tape.matrix_power_chain(adj, self.walk_length)? {
                parts.push(tape.sum(power)?);
            }
        }
        tape.concat_cols(&parts)
    }

    /// Flattened `H` for a batch of graphs (`B x N(P+1)`).
    pub fn features_batch(&self, tape: &mut Tape, b: &Bindings, graphs: &[&Graph]) -> Result<Var> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("empty kernel batch".into()));
        }
        let p1 = self.walk_length + 1;
        let width = self.feature_width();
        let mut tiled = Tensor::zeros(graphs.len(), width);
        for (row, g) in graphs.iter().enumerate() {
            if g.num_nodes() == 0 {
                return Err(Error::InvalidGraph("kernel needs at least one node".into()));
            }
            let counts = graph_walk_counts(g, self.walk_length);
            for i in 0..self.hidden.len() {
                for (p, &c) in counts.iter().enumerate() {
                    tiled.set(row, i * p1 + p, c);
                }
            }
        }
        let hidden = self.hidden_counts(tape, b)?;
        let g = tape.constant(tiled);
        let h = tape.mul_row(g, hidden)?;
        if self.log1p {
            tape.log1p(h)
        } else {
            Ok(h)
        }
    }

    /// `g_phi` for a batch of graphs (`B x d`).
    pub fn forward_batch(&self, tape: &mut Tape, b: &Bindings, graphs: &[&Graph]) -> Result<Var> {
        let h = self.features_batch(tape, b, graphs)?;
        let z = tape.matmul(h, b[self.head_weight])?;
        tape.add_row(z, b[self.head_bias])
    }

    /// `g_phi(G)` as a `1 x d` row.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, graph: &Graph) -> Result<Var> {
        self.forward_batch(tape, b, &[graph])
    }

    pub fn embed(&self, store: &ParamStore, graph: &Graph, source: usize) -> Result<GraphEmbedding> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let out = self.forward(&mut tape, &b, graph)?;
        Ok(GraphEmbedding { vector: tape.value(out).data().to_vec(), source })
    }

    /// `H` computed with [`kernel_value`], off the tape.
    pub fn features(&self, store: &ParamStore, graph: &Graph) -> Result<KernelFeatures> {
        let mut h = Tensor::zeros(self.hidden.len(), self.walk_length + 1);
        for i in 0..self.hidden.len() {
            let a = self.hidden.adjacency(store, i);
            for p in 0..=self.walk_length {
                h.set(i, p, kernel_value(graph, &a, p)?);
            }
        }
        Ok(KernelFeatures { h })
    }
}

/// `[s_0, ..., s_P]` with `s_p = e^T A^p e` for a square nonnegative matrix.
pub fn walk_counts(adjacency: &Tensor, walk_length: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(walk_length + 1);
    out.push(adjacency.rows() as f64);
    for m in adjacency.power_chain(walk_length)? {
        out.push(m.sum());
    }
    Ok(out)
}

/// Walk counts of a graph's 0/1 adjacency by repeated sparse products
/// `x_p = A x_{p-1}`, `x_0 = e`. Exact for counts below 2^53.
pub fn graph_walk_counts(graph: &Graph, walk_length: usize) -> Vec<f64> {
    let n = graph.num_nodes();
    let mut x = vec![1.0; n];
    let mut out = Vec::with_capacity(walk_length + 1);
    out.push(n as f64);
    for _ in 0..walk_length {
        let next: Vec<f64> = (0..n).map(|v| graph.neighbors(v).iter().map(|&u| x[u]).sum()).collect();
        out.push(next.iter().sum());
        x = next;
    }
    out
}

/// `e^T A_x^p e` between `graph` and a hidden adjacency, by factorization.
pub fn kernel_value(graph: &Graph, hidden: &Tensor, p: usize) -> Result<f64> {
    let g = graph_walk_counts(graph, p);
    let h = walk_counts(hidden, p)?;
    Ok(g[p] * h[p])
}

/// Adjacency of the direct product graph, built from its definition: node
/// `(v, v')` has index `v * n' + v'`, and `{(v, v'), (u, u')}` is an edge
/// with weight `A'[v'][u']` whenever `{v, u}` is an edge of `graph` and
/// `A'[v'][u'] > 0`.
pub fn direct_product_adjacency(graph: &Graph, hidden: &Tensor, cap: usize) -> Result<Tensor> {
    let (n, m) = (graph.num_nodes(), hidden.rows());
    if hidden.cols() != m {
        return Err(Error::ShapeMismatch { op: "direct_product", left: hidden.shape(), right: (m, m) });
    }
    let size = n * m;
    if size > cap {
        return Err(Error::InvalidArgument(format!("product graph of {size} nodes exceeds cap {cap}")));
    }
    let mut a = Tensor::zeros(size, size);
    for &(v, u) in graph.edges() {
        for vp in 0..m {
            for up in 0..m {
                let w = hidden.get(vp, up);
                if w > 0.0 {
                    a.set(v * m + vp, u * m + up, w);
                    a.set(u * m + up, v * m + vp, w);
                }
            }
        }
    }
    Ok(a)
}

/// Reference kernel on the explicit product graph. Without weights returns
/// `e^T A_x^p e`; with `weights = [w_0, ..., w_P]` returns
/// `sum_q w_q e^T A_x^q e` and ignores `p`.
pub fn direct_product_oracle(
    graph: &Graph,
    hidden: &Tensor,
    p: usize,
    weights: Option<&[f64]>,
    cap: usize,
) -> Result<f64> {
    let a = direct_product_adjacency(graph, hidden, cap)?;
    let size = a.rows();
    let max_p = weights.map_or(p, |w| w.len().saturating_sub(1));
    let mut x = vec![1.0; size];
    let mut totals = vec![size as f64];
    for _ in 0..max_p {
        let next: Vec<f64> = (0..size).map(|r| a.row_slice(r).iter().zip(&x).map(|(w, y)| w * y).sum()).collect();
        totals.push(next.iter().sum());
        x = next;
    }
    Ok(match weights {
        Some(w) => w.iter().zip(&totals).map(|(a, b)| a * b).sum(),
        None => totals[p],
    })
}

/// One hidden graph after thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGraphExport {
    pub index: usize,
    pub num_nodes: usize,
    /// `(u, v, weight)` with `u < v`.
    pub edges: Vec<(usize, usize, f64)>,
    pub dot: String,
}

/// Keeps hidden-graph edges whose effective weight exceeds `threshold` and
/// renders each hidden graph as a DOT `graph`.
pub fn export_hidden_graphs(store: &ParamStore, params: &KernelParams, threshold: f64) -> Result<Vec<HiddenGraphExport>> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} must be >= 0")));
    }
    let mut out = Vec::with_capacity(params.hidden.len());
    for i in 0..params.hidden.len() {
        let a = params.hidden.adjacency(store, i);
        let n = a.rows();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let w = a.get(u, v);
                if w > threshold {
                    edges.push((u, v, w));
                }
            }
        }
        let mut dot = String::new();
        let _ = writeln!(dot, "graph hidden_{i} {{");
        for v in 0..n {
            let _ = writeln!(dot, "  {v};");
        }
        for &(u, v, w) in &edges {
            let _ = writeln!(dot, "  {u} -- {v} [weight={w}];");
        }
        dot.push_str("}\n");
        out.push(HiddenGraphExport { index: i, num_nodes: n, edges, dot });
    }
    Ok(out)
}

/// Node count and weighted edges of a DOT graph written by
/// [`export_hidden_graphs`].
pub fn parse_dot(text: &str) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let bad = |line: &str| Error::InvalidArgument(format!("unrecognized DOT line: {line}"));
    let mut nodes = 0;
    let mut edges = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with("graph ") || line == "}" {
            continue;
        }
        let body = line.strip_suffix(';').ok_or_else(|| bad(line))?;
        if let Some((lhs, rest)) = body.split_once("--") {
            let u: usize = lhs.trim().parse().map_err(|_| bad(line))?;
            let (v, attrs) = rest.trim().split_once(' ').ok_or_else(|| bad(line))?;
            let v: usize = v.parse().map_err(|_| bad(line))?;
            let w = attrs
                .trim()
                .strip_prefix("[weight=")
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| bad(line))?;
            edges.push((u, v, w.parse::<f64>().map_err(|_| bad(line))?));
        } else {
            let _: usize = body.parse().map_err(|_| bad(line))?;
            nodes += 1;
        }
    }
    Ok((nodes, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check_store;
    use crate::rng;

    fn cycle(n: usize) -> Graph {
        Graph::unattributed(n, (0..n).map(|v| (v, (v + 1) % n)).collect(), None).unwrap()
    }

    fn k2() -> Tensor {
        Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn triangle_walk_counts() {
        assert_eq!(walk_counts(&cycle(3).adjacency(), 2).unwrap(), vec![3.0, 6.0, 12.0]);
        assert_eq!(graph_walk_counts(&cycle(3), 2), vec![3.0, 6.0, 12.0]);
    }

    #[test]
    fn isolated_node_and_single_edge() {
        let g = Graph::unattributed(1, vec![], None).unwrap();
        assert_eq!(walk_counts(&g.adjacency(), 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(walk_counts(&k2(), 2).unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn triangle_times_edge_is_hexagon() {
        let a = direct_product_adjacency(&cycle(3), &k2(), DEFAULT_PRODUCT_CAP).unwrap();
        assert_eq!(a.rows(), 6);
        let edges = (0..6).flat_map(|u| (u + 1..6).map(move |v| (u, v))).filter(|&(u, v)| a.get(u, v) > 0.0).count();
        assert_eq!(edges, 6);
        for v in 0..6 {
            assert_eq!(a.row_slice(v).iter().sum::<f64>(), 2.0);
        }
        // Connected 2-regular on 6 nodes: C6.
        let mut seen = [false; 6];
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            if !core::mem::replace(&mut seen[v], true) {
                stack.extend((0..6).filter(|&u| a.get(v, u) > 0.0));
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(kernel_value(&cycle(3), &k2(), 1).unwrap(), 12.0);
        assert_eq!(direct_product_oracle(&cycle(3), &k2(), 1, None, DEFAULT_PRODUCT_CAP).unwrap(), 12.0);
    }

    #[test]
    fn zero_length_kernel_is_node_product() {
        assert_eq!(kernel_value(&cycle(4), &k2(), 0).unwrap(), 8.0);
    }

    #[test]
    fn edgeless_hidden_graph_gives_zero_walks() {
        let lone = Tensor::zeros(1, 1);
        for p in 1..4 {
            assert_eq!(direct_product_oracle(&cycle(5), &lone, p, None, DEFAULT_PRODUCT_CAP).unwrap(), 0.0);
        }
        let w = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(direct_product_oracle(&cycle(5), &k2(), 0, Some(&w), DEFAULT_PRODUCT_CAP).unwrap(), 10.0);
    }

    #[test]
    fn oracle_respects_cap() {
        assert!(direct_product_oracle(&cycle(5), &k2(), 1, None, 9).is_err());
    }

    #[test]
    fn nonpositive_hidden_weights_zero_the_walk_columns() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(&[2]);
        let params = KernelParams::init(&mut store, "k", 3, 4, 3, 5, false, &mut r).unwrap();
        for &id in &params.hidden.weights {
            store.value_mut(id).data_mut().iter_mut().for_each(|w| *w = -0.5);
        }
        let h = params.features(&store, &cycle(6)).unwrap().h;
        for i in 0..3 {
            assert_eq!(h.get(i, 0), 24.0);
            for p in 1..4 {
                assert_eq!(h.get(i, p), 0.0);
            }
        }
    }

    #[test]
    fn tape_features_match_factorized_values() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(&[9]);
        let params = KernelParams::init(&mut store, "k", 4, 5, 3, 6, false, &mut r).unwrap();
        let g = cycle(7);
        let expected = params.features(&store, &g).unwrap().h;
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let flat = params.features_batch(&mut tape, &b, &[&g]).unwrap();
        for (x, y) in tape.value(flat).data().iter().zip(expected.data()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(&[13]);
        let params = KernelParams::init(&mut store, "k", 3, 4, 3, 4, false, &mut r).unwrap();
        let probe = store.add("probe", uniform(&mut r, 4, 1, -1.0, 1.0));
        let g = Graph::unattributed(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)], None).unwrap();
        let report = finite_diff_check_store(
            &store,
            |tape, b| {
                let w = params.forward(tape, b, &g)?;
                let s = tape.matmul(w, b[probe])?;
                let s = tape.scale(s, 1e-2)?;
                let s = tape.sigmoid(s)?;
                tape.sum(s)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn export_thresholds() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(&[4]);
        let params = KernelParams::init(&mut store, "k", 3, 5, 3, 4, false, &mut r).unwrap();
        let all = export_hidden_graphs(&store, &params, 0.0).unwrap();
        assert!(all.iter().all(|h| h.edges.len() == 10));
        let none = export_hidden_graphs(&store, &params, 1.0).unwrap();
        assert_eq!(none.len(), 3);
        assert!(none.iter().all(|h| h.edges.is_empty()));
        for h in export_hidden_graphs(&store, &params, 0.5).unwrap() {
            let (n, edges) = parse_dot(&h.dot).unwrap();
            assert_eq!(n, 5);
            assert_eq!(edges, h.edges);
        }
    }
}
