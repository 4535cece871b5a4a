//! Anchor similarity distributions, symmetric KL consistency and
//! cross-entropy, both on plain values and on the tape.

use alloc::vec::Vec;

use crate::autodiff::{softmax_in_place, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor for probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub const DEFAULT_TAU: f64 = 0.5;

/// Which encoder's embedding space a distribution lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSpace {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDistribution {
    pub probs: Vec<f64>,
    pub owner: usize,
    pub space: EmbeddingSpace,
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// `probs[m] ∝ exp(cos(embedding, anchors[m]) / tau)`.
pub fn similarity_distribution(embedding: &[f64], anchors: &[Vec<f64>], tau: f64) -> Result<Vec<f64>> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("similarity against an empty memory bank".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("temperature {tau} must be positive")));
    }
    let mut scores: Vec<f64> = anchors.iter().map(|a| cosine(embedding, a) / tau).collect();
    softmax_in_place(&mut scores);
    Ok(scores)
}

/// `0.5 * (KL(p||q) + KL(q||p)) = 0.5 * sum (p - q)(ln p - ln q)`, with
/// probabilities floored at [`PROB_FLOOR`] inside the logs.
pub fn consistency_loss(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch { op: "consistency_loss", left: (1, p.len()), right: (1, q.len()) });
    }
    let ln = |x: f64| libm::log(x.max(PROB_FLOOR));
    Ok(0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b) * (ln(a) - ln(b))).sum::<f64>())
}

/// Mean of `-log softmax(logits)[label]` over rows.
pub fn supervised_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = cross_entropy(&mut tape, l, labels)?;
    Ok(tape.value(loss).item())
}

/// Row-wise anchor similarity distributions: `B x d` embeddings against a
/// constant `M x d` anchor matrix gives `B x M`.
pub fn similarity_on_tape(tape: &mut Tape, embeddings: Var, anchors: &Tensor, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("temperature {tau} must be positive")));
    }
    if anchors.rows() == 0 {
        return Err(Error::InvalidArgument("similarity against an empty memory bank".into()));
    }
    let zn = tape.l2_normalize(embeddings)?;
    let a = tape.constant(anchors.clone());
    let an = tape.l2_normalize(a)?;
    let at = tape.transpose(an)?;
    let cos = tape.matmul(zn, at)?;
    let scaled = tape.scale(cos, 1.0 / tau)?;
    tape.row_softmax(scaled)
}

/// Mean over rows of the symmetric KL between row distributions of `p` and
/// `q` (both `B x M`). Gradient flows into both arguments.
pub fn consistency_on_tape(tape: &mut Tape, p: Var, q: Var) -> Result<Var> {
    let rows = tape.value(p).rows();
    let lp = tape.clamp_min(p, PROB_FLOOR)?;
    let lp = tape.log(lp)?;
    let lq = tape.clamp_min(q, PROB_FLOOR)?;
    let lq = tape.log(lq)?;
    let dp = tape.sub(p, q)?;
    let dl = tape.sub(lp, lq)?;
    let prod = tape.mul(dp, dl)?;
    let total = tape.sum(prod)?;
    tape.scale(total, 0.5 / rows as f64)
}

/// Mean cross-entropy of `B x C` logits against class indices.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = tape.value(logits).shape();
    if labels.len() != rows || rows == 0 {
        return Err(Error::ShapeMismatch { op: "cross_entropy", left: (rows, classes), right: (labels.len(), 1) });
    }
    let mut onehot = Tensor::zeros(rows, classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidLabel { label: y, num_classes: classes });
        }
        onehot.set(r, y, 1.0);
    }
    let lsm = tape.log_softmax(logits)?;
    let mask = tape.constant(onehot);
    let picked = tape.mul(lsm, mask)?;
    let total = tape.sum(picked)?;
    tape.scale(total, -1.0 / rows as f64)
}
