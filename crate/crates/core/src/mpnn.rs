//! Message-passing encoder with attention readout.
//!
//! Each layer computes `h_v <- COM(h_v + sum_{u in N(v)} h_u)` where `COM` is
//! `Linear -> relu -> Linear`. The graph vector is `sum_v a_v h_v` over the
//! last layer, with `a` a softmax of `t . h_v` restricted to nodes whose
//! score is positive (uniform weights when no score is positive).

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Pooled, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::{glorot_uniform, Bindings, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComLayer {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpnnParams {
    pub layers: Vec<ComLayer>,
    /// `d x 1` attention vector `t`.
    pub attention: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// A detached graph-level vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedding {
    pub vector: Vec<f64>,
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct MpnnOutput {
    /// `1 x d` graph embedding.
    pub embedding: Var,
    pub readout: Pooled,
}

impl MpnnParams {
    /// Registers `layers` COM blocks and the attention vector under `prefix`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "mpnn dims must be positive (input {input_dim}, hidden {hidden_dim}, layers {layers})"
            )));
        }
        let mut blocks = Vec::with_capacity(layers);
        for k in 0..layers {
            let fan_in = if k == 0 { input_dim } else { hidden_dim };
            blocks.push(ComLayer {
                w1: store.add(format!("{prefix}.layer{k}.w1"), glorot_uniform(rng, fan_in, hidden_dim)),
                b1: store.add(format!("{prefix}.layer{k}.b1"), Tensor::zeros(1, hidden_dim)),
                w2: store.add(format!("{prefix}.layer{k}.w2"), glorot_uniform(rng, hidden_dim, hidden_dim)),
                b2: store.add(format!("{prefix}.layer{k}.b2"), Tensor::zeros(1, hidden_dim)),
            });
        }
        let attention = store.add(format!("{prefix}.attention"), glorot_uniform(rng, hidden_dim, 1));
        Ok(Self { layers: blocks, attention, input_dim, hidden_dim })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Node states after the last layer (`n x d`).
    pub fn node_states(&self, tape: &mut Tape, b: &Bindings, graph: &Graph) -> Result<Var> {
        if graph.feature_dim() != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "mpnn_forward",
                left: (graph.num_nodes(), graph.feature_dim()),
                right: (graph.num_nodes(), self.input_dim),
            });
        }
        if graph.num_nodes() == 0 {
            return Err(Error::InvalidGraph("mpnn needs at least one node".into()));
        }
        let mut h = tape.constant(graph.features().clone());
        for layer in &self.layers {
            let agg = tape.aggregate(h, graph.neighborhoods())?;
            let z = tape.matmul(agg, b[layer.w1])?;
            let z = tape.add_row(z, b[layer.b1])?;
            let z = tape.relu(z)?;
            let z = tape.matmul(z, b[layer.w2])?;
            h = tape.add_row(z, b[layer.b2])?;
        }
        Ok(h)
    }

    /// `f_theta(G)`. `frozen_mask` pins the readout's survivor mask.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        graph: &Graph,
        frozen_mask: Option<&[bool]>,
    ) -> Result<MpnnOutput> {
        let h = self.node_states(tape, b, graph)?;
        let scores = tape.matmul(h, b[self.attention])?;
        let readout = tape.attention_pool(h, scores, frozen_mask)?;
        Ok(MpnnOutput { embedding: readout.output, readout })
    }

    /// Evaluates the encoder on a fresh tape and detaches the result.
    pub fn embed(&self, store: &ParamStore, graph: &Graph, source: usize) -> Result<GraphEmbedding> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let out = self.forward(&mut tape, &b, graph, None)?;
        Ok(GraphEmbedding { vector: tape.value(out.embedding).data().to_vec(), source })
    }
}

/// Attention readout on plain values: returns the pooled vector and the
/// per-node weights.
pub fn attention_readout(node_states: &Tensor, t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let h = tape.constant(node_states.clone());
    let t = tape.constant(Tensor::from_vec(t.len(), 1, t.to_vec())?);
    let s = tape.matmul(h, t)?;
    let pooled = tape.attention_pool(h, s, None)?;
    Ok((tape.value(pooled.output).data().to_vec(), pooled.weights))
}
