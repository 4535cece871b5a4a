//! Seeded toy datasets with structurally separable classes.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{degree_features, Dataset, Graph, DEFAULT_MAX_DEGREE};
use crate::rng;

pub fn cycle(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|v| (v, (v + 1) % n)).collect()
}

pub fn star(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|v| (0, v)).collect()
}

/// `K_n` minus a random matching of `floor(n / 2)` edges.
pub fn near_complete<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let removed: Vec<(usize, usize)> = order.chunks_exact(2).map(|p| (p[0].min(p[1]), p[0].max(p[1]))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if !removed.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// `count` graphs cycling through the classes cycle (0), star (1) and
/// near-complete (2), with sizes uniform in `min_nodes..=max_nodes` and
/// one-hot degree features.
pub fn three_families(count: usize, min_nodes: usize, max_nodes: usize, seed: u64) -> Result<Dataset> {
    if min_nodes < 3 || max_nodes < min_nodes || max_nodes > DEFAULT_MAX_DEGREE {
        return Err(Error::InvalidArgument(format!("bad node range {min_nodes}..={max_nodes}")));
    }
    let mut r = rng::stream(&[seed, 0x5359_4E54]);
    let mut graphs = Vec::with_capacity(count);
    for i in 0..count {
        let n = r.gen_range(min_nodes..=max_nodes);
        let label = i % 3;
        let edges = match label {
            0 => cycle(n),
            1 => star(n),
            _ => near_complete(n, &mut r),
        };
        let g = Graph::unattributed(n, edges, Some(label))?;
        graphs.push(degree_features(&g, DEFAULT_MAX_DEGREE)?);
    }
    Dataset::new(format!("synthetic-{count}"), graphs)
}
