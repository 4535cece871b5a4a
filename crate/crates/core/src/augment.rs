//! Stochastic graph views: edge dropping, node dropping, attribute masking
//! and random-walk subgraphs.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::split::{ceil_count, floor_count};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    EdgeDrop,
    NodeDrop,
    AttrMask,
    Subgraph,
    Identity,
}

impl AugmentKind {
    pub const RANDOM_FAMILY: [AugmentKind; 4] =
        [AugmentKind::EdgeDrop, AugmentKind::NodeDrop, AugmentKind::AttrMask, AugmentKind::Subgraph];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::EdgeDrop => "edge_drop",
            AugmentKind::NodeDrop => "node_drop",
            AugmentKind::AttrMask => "attr_mask",
            AugmentKind::Subgraph => "subgraph",
            AugmentKind::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub ratio: f64,
    pub rng_seed: u64,
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind, ratio: f64, rng_seed: u64) -> Result<Self> {
        check_ratio(ratio)?;
        Ok(Self { kind, ratio, rng_seed })
    }
}

/// Per-kind ratios and enable flags for [`random_augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub edge_drop: Option<f64>,
    pub node_drop: Option<f64>,
    pub attr_mask: Option<f64>,
    pub subgraph: Option<f64>,
}

pub const DEFAULT_RATIO: f64 = 0.2;

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            edge_drop: Some(DEFAULT_RATIO),
            node_drop: Some(DEFAULT_RATIO),
            attr_mask: Some(DEFAULT_RATIO),
            subgraph: Some(DEFAULT_RATIO),
        }
    }
}

impl AugmentConfig {
    /// Every augmentation disabled: views equal the input.
    pub fn identity() -> Self {
        Self { edge_drop: None, node_drop: None, attr_mask: None, subgraph: None }
    }

    /// Enabled kinds with their ratios, in a fixed order.
    pub fn enabled(&self) -> Vec<(AugmentKind, f64)> {
        [
            (AugmentKind::EdgeDrop, self.edge_drop),
            (AugmentKind::NodeDrop, self.node_drop),
            (AugmentKind::AttrMask, self.attr_mask),
            (AugmentKind::Subgraph, self.subgraph),
        ]
        .into_iter()
        .filter_map(|(k, r)| r.map(|r| (k, r)))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.enabled().iter().try_for_each(|&(_, r)| check_ratio(r))
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(alloc::format!("augmentation ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

/// Removes a uniformly random `floor(ratio * |E|)` subset of edges.
pub fn edge_drop<R: Rng + ?Sized>(g: &Graph, ratio: f64, rng: &mut R) -> Result<Graph> {
    check_ratio(ratio)?;
    let m = g.num_edges();
    let drop = floor_count(ratio * m as f64).min(m);
    if drop == 0 {
        return Ok(g.clone());
    }
    let mut removed = vec![false; m];
    for i in index::sample(rng, m, drop) {
        removed[i] = true;
    }
    let edges = g.edges().iter().zip(&removed).filter(|(_, &r)| !r).map(|(&e, _)| e).collect();
    Graph::new(g.num_nodes(), edges, g.features().clone(), g.label())
}

/// Removes `floor(ratio * |V|)` random nodes (keeping at least one) and
/// their incident edges. Survivors keep their relative order.
pub fn node_drop<R: Rng + ?Sized>(g: &Graph, ratio: f64, rng: &mut R) -> Result<Graph> {
    check_ratio(ratio)?;
    let n = g.num_nodes();
    let drop = floor_count(ratio * n as f64).min(n.saturating_sub(1));
    if drop == 0 {
        return Ok(g.clone());
    }
    let mut removed = vec![false; n];
    for i in index::sample(rng, n, drop) {
        removed[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
    g.induced_subgraph(&keep)
}

/// Replaces the feature rows of `floor(ratio * |V|)` random nodes with
/// `mean` (the dataset-wide mean feature vector).
pub fn attr_mask<R: Rng + ?Sized>(g: &Graph, ratio: f64, mean: &[f64], rng: &mut R) -> Result<Graph> {
    check_ratio(ratio)?;
    let f = g.feature_dim();
    if f == 0 || mean.len() != f {
        return Err(Error::InvalidArgument(alloc::format!(
            "attribute mask needs mean of width {f}, got {}",
            mean.len()
        )));
    }
    let n = g.num_nodes();
    let count = floor_count(ratio * n as f64).min(n);
    if count == 0 {
        return Ok(g.clone());
    }
    let mut features: Tensor = g.features().clone();
    for v in index::sample(rng, n, count) {
        features.data_mut()[v * f..(v + 1) * f].copy_from_slice(mean);
    }
    g.clone().with_features(features)
}

/// Induced subgraph on a node set of size `ceil((1 - ratio) * |V|)` grown by a
/// random walk from a random seed node. After `4 * target` steps without a
/// new node the walk restarts from a random kept node that still has an
/// unkept neighbor; growth stops early if the reached component is used up.
/// Nodes keep their relative order.
pub fn subgraph<R: Rng + ?Sized>(g: &Graph, ratio: f64, rng: &mut R) -> Result<Graph> {
    check_ratio(ratio)?;
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::InvalidGraph("subgraph of an empty graph".into()));
    }
    let target = ceil_count((1.0 - ratio) * n as f64).clamp(1, n);
    if target == n && is_connected(g) {
        return Ok(g.clone());
    }
    let mut kept = vec![false; n];
    let start = rng.gen_range(0..n);
    kept[start] = true;
    let mut members = vec![start];
    let mut current = start;
    let mut idle = 0;
    let stall_limit = 4 * target;
    while members.len() < target {
        let nbrs = g.neighbors(current);
        if nbrs.is_empty() || idle >= stall_limit {
            let frontier: Vec<usize> =
                members.iter().copied().filter(|&v| g.neighbors(v).iter().any(|&u| !kept[u])).collect();
            match frontier.choose(rng) {
                Some(&v) => current = v,
                None => break,
            }
            idle = 0;
            continue;
        }
        let next = nbrs[rng.gen_range(0..nbrs.len())];
        if kept[next] {
            idle += 1;
        } else {
            kept[next] = true;
            members.push(next);
            idle = 0;
        }
        current = next;
    }
    let keep: Vec<usize> = (0..n).filter(|&v| kept[v]).collect();
    g.induced_subgraph(&keep)
}

fn is_connected(g: &Graph) -> bool {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    let mut count = 0;
    while let Some(v) = stack.pop() {
        if core::mem::replace(&mut seen[v], true) {
            continue;
        }
        count += 1;
        stack.extend(g.neighbors(v).iter().copied().filter(|&u| !seen[u]));
    }
    count == n
}

/// Applies one augmentation kind.
pub fn apply<R: Rng + ?Sized>(g: &Graph, kind: AugmentKind, ratio: f64, mean: &[f64], rng: &mut R) -> Result<Graph> {
    match kind {
        AugmentKind::EdgeDrop => edge_drop(g, ratio, rng),
        AugmentKind::NodeDrop => node_drop(g, ratio, rng),
        AugmentKind::AttrMask => attr_mask(g, ratio, mean, rng),
        AugmentKind::Subgraph => subgraph(g, ratio, rng),
        AugmentKind::Identity => Ok(g.clone()),
    }
}

/// Picks one enabled kind uniformly at random and applies it. With nothing
/// enabled the graph is returned unchanged.
pub fn random_augment<R: Rng + ?Sized>(
    g: &Graph,
    config: &AugmentConfig,
    mean: &[f64],
    rng: &mut R,
) -> Result<(AugmentKind, Graph)> {
    let enabled = config.enabled();
    if enabled.is_empty() {
        return Ok((AugmentKind::Identity, g.clone()));
    }
    let (kind, ratio) = enabled[rng.gen_range(0..enabled.len())];
    Ok((kind, apply(g, kind, ratio, mean, rng)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn featured(n: usize, edges: Vec<(usize, usize)>) -> Graph {
        let f = Tensor::from_vec(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        Graph::new(n, edges, f, Some(0)).unwrap()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut r = rng::stream(&[seed, 1]);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        featured(n, edges)
    }

    fn path(n: usize) -> Graph {
        featured(n, (0..n - 1).map(|v| (v, v + 1)).collect())
    }

    #[test]
    fn edge_drop_counts() {
        let g = featured(5, (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v))).collect());
        assert_eq!(g.num_edges(), 10);
        let mut r = rng::stream(&[1]);
        assert_eq!(edge_drop(&g, 0.0, &mut r).unwrap(), g);
        let all = edge_drop(&g, 1.0, &mut r).unwrap();
        assert_eq!((all.num_nodes(), all.num_edges()), (5, 0));
        assert_eq!(all.features(), g.features());
        assert_eq!(edge_drop(&g, 0.2, &mut r).unwrap().num_edges(), 8);
    }

    #[test]
    fn node_drop_triangle() {
        let tri = featured(3, vec![(0, 1), (1, 2), (0, 2)]);
        let mut r = rng::stream(&[2]);
        assert_eq!(node_drop(&tri, 0.0, &mut r).unwrap(), tri);
        let g = node_drop(&tri, 0.34, &mut r).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.features().rows()), (2, 1, 2));
        let single = featured(1, vec![]);
        assert_eq!(node_drop(&single, 0.9, &mut r).unwrap(), single);
        assert_eq!(node_drop(&tri, 1.0, &mut r).unwrap().num_nodes(), 1);
    }

    #[test]
    fn attr_mask_uses_mean() {
        let g = path(4);
        let mean = [10.0, 20.0];
        let mut r = rng::stream(&[3]);
        assert_eq!(attr_mask(&g, 0.0, &mean, &mut r).unwrap(), g);
        let all = attr_mask(&g, 1.0, &mean, &mut r).unwrap();
        for v in 0..4 {
            assert_eq!(all.features().row_slice(v), &mean);
        }
        assert_eq!(all.edges(), g.edges());
        let half = attr_mask(&g, 0.5, &mean, &mut r).unwrap();
        assert_eq!((0..4).filter(|&v| half.features().row_slice(v) == mean).count(), 2);
    }

    #[test]
    fn subgraph_sizes() {
        let mut r = rng::stream(&[4]);
        let g = path(10);
        assert_eq!(subgraph(&g, 0.0, &mut r).unwrap(), g);
        for ratio in [0.1, 0.2, 0.5, 0.7, 0.95] {
            let s = subgraph(&g, ratio, &mut r).unwrap();
            assert_eq!(s.num_nodes(), ceil_count((1.0 - ratio) * 10.0));
            // a connected piece of a path is a path
            assert_eq!(s.num_edges(), s.num_nodes() - 1);
        }
    }

    #[test]
    fn subgraph_stops_at_component_boundary() {
        let two = featured(6, vec![(0, 1), (1, 2), (3, 4), (4, 5)]);
        let mut r = rng::stream(&[5]);
        let s = subgraph(&two, 0.0, &mut r).unwrap();
        assert_eq!(s.num_nodes(), 3);
    }

    #[test]
    fn random_augment_is_deterministic_and_uniform() {
        let g = random_graph(8, 0.4, 2);
        let mean = [0.5, 0.5];
        let cfg = AugmentConfig::default();
        let a = random_augment(&g, &cfg, &mean, &mut rng::stream(&[9])).unwrap();
        let b = random_augment(&g, &cfg, &mean, &mut rng::stream(&[9])).unwrap();
        assert_eq!(a, b);

        let mut counts = [0usize; 4];
        let mut r = rng::stream(&[10]);
        for _ in 0..10_000 {
            let (kind, _) = random_augment(&g, &cfg, &mean, &mut r).unwrap();
            counts[AugmentKind::RANDOM_FAMILY.iter().position(|&k| k == kind).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn identity_config_returns_input() {
        let g = random_graph(6, 0.5, 3);
        let (kind, v) = random_augment(&g, &AugmentConfig::identity(), &[0.0, 0.0], &mut rng::stream(&[1])).unwrap();
        assert_eq!(kind, AugmentKind::Identity);
        assert_eq!(v, g);
    }

    #[test]
    fn rejects_ratio_out_of_range() {
        let g = path(3);
        assert!(edge_drop(&g, 1.5, &mut rng::stream(&[0])).is_err());
        assert!(AugmentSpec::new(AugmentKind::NodeDrop, -0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn views_are_valid_and_shrinking(n in 1usize..12, p in 0.0f64..1.0, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
            let g = random_graph(n, p, seed);
            let mean = [1.0, 2.0];
            for kind in AugmentKind::RANDOM_FAMILY {
                let mut r = rng::stream(&[seed, 7]);
                let v = apply(&g, kind, ratio, &mean, &mut r).unwrap();
                // Rebuilding through the strict constructor re-checks every invariant.
                prop_assert!(Graph::new(v.num_nodes(), v.edges().to_vec(), v.features().clone(), v.label()).is_ok());
                prop_assert!(v.num_nodes() >= 1 && v.num_nodes() <= g.num_nodes());
                prop_assert!(v.num_edges() <= g.num_edges());
                prop_assert_eq!(v.feature_dim(), g.feature_dim());
                if kind == AugmentKind::AttrMask {
                    prop_assert_eq!(v.edges(), g.edges());
                }
                let again = apply(&g, kind, ratio, &mean, &mut rng::stream(&[seed, 7])).unwrap();
                prop_assert_eq!(&v, &again);
            }
        }

        #[test]
        fn subgraph_is_induced(n in 2usize..12, p in 0.1f64..1.0, ratio in 0.0f64..0.9, seed in any::<u64>()) {
            let g = random_graph(n, p, seed);
            let mut r = rng::stream(&[seed, 8]);
            let s = subgraph(&g, ratio, &mut r).unwrap();
            // Recover which original nodes were kept from their (unique) features.
            let kept: Vec<usize> = (0..s.num_nodes())
                .map(|i| (0..n).find(|&v| g.features().row_slice(v) == s.features().row_slice(i)).unwrap())
                .collect();
            let expected = g.induced_subgraph(&kept).unwrap();
            prop_assert_eq!(s.edges(), expected.edges());
        }
    }
}
