//! Undirected attributed graphs and labeled graph collections.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Neighborhoods;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An undirected simple graph with a dense node-feature matrix.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted. Self-loops and
/// duplicate pairs are rejected by [`Graph::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: Option<usize>,
    hood: Neighborhoods,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>, features: Tensor, label: Option<usize>) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) outside {num_nodes} nodes")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        let hood = build_neighborhoods(num_nodes, &normalized);
        Ok(Self { num_nodes, edges: normalized, features, label, hood })
    }

    /// Like [`Graph::new`] but silently drops self-loops and duplicate pairs.
    pub fn from_edges_lossy(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        label: Option<usize>,
    ) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> =
            edges.into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u.min(v), u.max(v))).collect();
        Self::new(num_nodes, set.into_iter().collect(), features, label)
    }

    /// Graph whose features are a single constant column.
    pub fn unattributed(num_nodes: usize, edges: Vec<(usize, usize)>, label: Option<usize>) -> Result<Self> {
        Self::new(num_nodes, edges, Tensor::full(num_nodes, 1, 1.0), label)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn with_features(self, features: Tensor) -> Result<Self> {
        Self::new(self.num_nodes, self.edges, features, self.label)
    }

    pub fn neighborhoods(&self) -> &Neighborhoods {
        &self.hood
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.hood.targets[self.hood.offsets[v]..self.hood.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.hood.offsets[v + 1] - self.hood.offsets[v]
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut a = Tensor::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Induced subgraph on `keep` (any order, no repeats). Node `keep[i]`
    /// becomes node `i`, feature rows follow.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph> {
        let mut index = vec![usize::MAX; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.num_nodes || index[old] != usize::MAX {
                return Err(Error::InvalidGraph(format!("bad node {old} in subgraph selection")));
            }
            index[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(u, v)| index[*u] != usize::MAX && index[*v] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]))
            .collect();
        let f = self.feature_dim();
        let mut data = Vec::with_capacity(keep.len() * f);
        for &old in keep {
            data.extend_from_slice(self.features.row_slice(old));
        }
        Graph::new(keep.len(), edges, Tensor::from_vec(keep.len(), f, data)?, self.label)
    }

    /// Relabels nodes: old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || inverse[new] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inverse[new] = old;
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let f = self.feature_dim();
        let mut data = Vec::with_capacity(n * f);
        for &old in &inverse {
            data.extend_from_slice(self.features.row_slice(old));
        }
        Graph::new(n, edges, Tensor::from_vec(n, f, data)?, self.label)
    }

    /// Disjoint union; `other`'s nodes are appended after this graph's.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Graph> {
        if self.feature_dim() != other.feature_dim() {
            return Err(Error::InvalidGraph("feature dims differ".into()));
        }
        let shift = self.num_nodes;
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (u + shift, v + shift)));
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(other.features.data());
        let n = shift + other.num_nodes;
        Graph::new(n, edges, Tensor::from_vec(n, self.feature_dim(), data)?, self.label)
    }
}

fn build_neighborhoods(n: usize, edges: &[(usize, usize)]) -> Neighborhoods {
    let mut degree = vec![0usize; n];
    for &(u, v) in edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for d in &degree {
        offsets.push(offsets.last().unwrap() + d);
    }
    let mut fill = offsets.clone();
    let mut targets = vec![0; 2 * edges.len()];
    for &(u, v) in edges {
        targets[fill[u]] = v;
        fill[u] += 1;
        targets[fill[v]] = u;
        fill[v] += 1;
    }
    for v in 0..n {
        targets[offsets[v]..offsets[v + 1]].sort_unstable();
    }
    Neighborhoods { offsets, targets }
}

/// Copy of `graph` whose features are one-hot degrees. Degrees at or above
/// `max_degree` share the last bucket, so `feature_dim = max_degree + 1`.
pub fn degree_features(graph: &Graph, max_degree: usize) -> Result<Graph> {
    if max_degree == 0 {
        return Err(Error::InvalidArgument("max_degree must be at least 1".into()));
    }
    let n = graph.num_nodes();
    let mut f = Tensor::zeros(n, max_degree + 1);
    for v in 0..n {
        f.set(v, graph.degree(v).min(max_degree), 1.0);
    }
    graph.clone().with_features(f)
}

pub const DEFAULT_MAX_DEGREE: usize = 64;

/// A named collection of graphs sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
}

impl Dataset {
    /// Validates shared feature width and that the observed labels are
    /// exactly `0..num_classes`.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self> {
        if let Some(first) = graphs.first() {
            let f = first.feature_dim();
            if let Some(bad) = graphs.iter().position(|g| g.feature_dim() != f) {
                return Err(Error::InvalidGraph(format!(
                    "graph {bad} has feature dim {} but graph 0 has {f}",
                    graphs[bad].feature_dim()
                )));
            }
        }
        let labels: BTreeSet<usize> = graphs.iter().filter_map(Graph::label).collect();
        let num_classes = labels.len();
        if let Some(&max) = labels.iter().next_back() {
            if max >= num_classes {
                return Err(Error::InvalidLabel { label: max, num_classes });
            }
        }
        Ok(Self { name: name.into(), graphs, num_classes })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    /// Mean feature row over every node of every graph.
    pub fn feature_mean(&self) -> Vec<f64> {
        let f = self.feature_dim();
        let mut mean = vec![0.0; f];
        let mut count = 0usize;
        for g in &self.graphs {
            for r in 0..g.num_nodes() {
                for (m, x) in mean.iter_mut().zip(g.features().row_slice(r)) {
                    *m += x;
                }
            }
            count += g.num_nodes();
        }
        if count > 0 {
            for m in &mut mean {
                *m /= count as f64;
            }
        }
        mean
    }

    /// Replaces every graph's features with one-hot degrees.
    pub fn with_degree_features(self, max_degree: usize) -> Result<Self> {
        let graphs = self.graphs.iter().map(|g| degree_features(g, max_degree)).collect::<Result<Vec<_>>>()?;
        Ok(Self { graphs, ..self })
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.graphs.iter().map(Graph::label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::unattributed(3, vec![(0, 1), (1, 2), (2, 0)], Some(0)).unwrap()
    }

    #[test]
    fn rejects_invalid_edges() {
        assert!(Graph::unattributed(2, vec![(0, 2)], None).is_err());
        assert!(Graph::unattributed(2, vec![(1, 1)], None).is_err());
        assert!(Graph::unattributed(2, vec![(0, 1), (1, 0)], None).is_err());
        assert!(Graph::new(2, vec![], Tensor::zeros(3, 1), None).is_err());
    }

    #[test]
    fn lossy_constructor_dedups_and_drops_loops() {
        let g = Graph::from_edges_lossy(3, [(0, 1), (1, 0), (2, 2), (1, 2)], Tensor::zeros(3, 1), None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn degree_features_triangle() {
        let g = degree_features(&triangle(), 4).unwrap();
        assert_eq!(g.feature_dim(), 5);
        for r in 0..3 {
            assert_eq!(g.features().row_slice(r), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn degree_features_isolated_node() {
        let g = degree_features(&Graph::unattributed(1, vec![], None).unwrap(), 4).unwrap();
        assert_eq!(g.features().row_slice(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn degree_features_clamp_high_degree() {
        let star = Graph::unattributed(10, (1..10).map(|v| (0, v)).collect(), None).unwrap();
        let g = degree_features(&star, 4).unwrap();
        assert_eq!(g.features().row_slice(0), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.features().row_slice(3), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        for r in 0..10 {
            assert_eq!(g.features().row_slice(r).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn induced_subgraph_of_triangle() {
        let g = triangle().induced_subgraph(&[2, 0]).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn dataset_counts_classes_and_rejects_gaps() {
        let a = Graph::unattributed(1, vec![], Some(0)).unwrap();
        let b = Graph::unattributed(1, vec![], Some(1)).unwrap();
        assert_eq!(Dataset::new("d", vec![a.clone(), b]).unwrap().num_classes, 2);
        let c = Graph::unattributed(1, vec![], Some(2)).unwrap();
        assert!(Dataset::new("d", vec![a, c]).is_err());
    }
}
