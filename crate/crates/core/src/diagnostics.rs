//! Self-checks shared by the unit tests, the `check` command and the
//! acceptance suite: finite-difference sweeps over every tape primitive and
//! the full model, the direct-product kernel oracle, loss invariants and the
//! memory bank's FIFO contract.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Neighborhoods, Tape, Var};
use crate::error::Result;
use crate::gradcheck::{finite_diff_check, relative_error, ridders_check_store, StoreCheck};
use crate::graph::Graph;
use crate::params::uniform;
use crate::rng;
use crate::rwkernel::{direct_product_oracle, kernel_value, DEFAULT_PRODUCT_CAP};
use crate::synthetic::{cycle, three_families};
use crate::tensor::Tensor;
use crate::trainer::loss::{consistency_loss, similarity_distribution};
use crate::trainer::{build_objective, BankEntry, MemoryBank, Model, ModelSpec, TrainConfig, Trainer, Variant};

/// Where a primitive's test inputs are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Signed,
    Positive,
    /// Magnitude at least 0.05, clear of kinks at 0.
    AwayFromZero,
}

pub type PrimitiveOp = fn(&mut Tape, Var, u64) -> Result<Var>;

#[derive(Debug, Clone, Copy)]
pub struct PrimitiveCase {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub domain: Domain,
    pub op: PrimitiveOp,
}

impl PrimitiveCase {
    pub fn input(&self, seed: u64) -> Tensor {
        let (r, c) = self.shape;
        match self.domain {
            Domain::Signed => random(r, c, -1.5, 1.5, seed),
            Domain::Positive => random(r, c, 0.2, 2.0, seed),
            Domain::AwayFromZero => away_from_zero(r, c, 0.05, 1.0, seed),
        }
    }

    /// Worst relative error of `sum(op(x) * C)` for a fixed random `C`.
    pub fn check(&self, x: &Tensor, seed: u64) -> Result<f64> {
        finite_diff_check(
            |t, v| {
                let y = (self.op)(t, v, seed)?;
                weighted_sum(t, y, seed)
            },
            x,
            1e-4,
        )
    }
}

pub fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    uniform(&mut rng::stream(&[seed, 0x7E57]), rows, cols, lo, hi)
}

pub fn away_from_zero(rows: usize, cols: usize, gap: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng::stream(&[seed, 0x6A70]);
    let data = (0..rows * cols)
        .map(|_| {
            let m: f64 = r.gen_range(gap..hi);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(v).shape();
    let w = tape.constant(random(r, c, -1.0, 1.0, seed ^ 0xC0FF));
    let m = tape.mul(v, w)?;
    tape.sum(m)
}

fn case(name: &'static str, shape: (usize, usize), domain: Domain, op: PrimitiveOp) -> PrimitiveCase {
    PrimitiveCase { name, shape, domain, op }
}

/// One case per tape operation.
pub fn primitive_cases() -> Vec<PrimitiveCase> {
    use Domain::*;
    vec![
        case("matmul_left", (3, 4), Signed, |t, x, s| {
            let b = t.constant(random(4, 2, -1.0, 1.0, s));
            t.matmul(x, b)
        }),
        case("matmul_right", (4, 2), Signed, |t, x, s| {
            let a = t.constant(random(3, 4, -1.0, 1.0, s));
            t.matmul(a, x)
        }),
        case("matmul_self", (3, 3), Signed, |t, x, _| t.matmul(x, x)),
        case("add", (3, 4), Signed, |t, x, s| {
            let c = t.constant(random(3, 4, -1.0, 1.0, s));
            let y = t.add(x, c)?;
            t.add(y, x)
        }),
        case("sub", (3, 4), Signed, |t, x, s| {
            let c = t.constant(random(3, 4, -1.0, 1.0, s));
            let y = t.sub(c, x)?;
            t.mul(y, y)
        }),
        case("add_row", (1, 4), Signed, |t, x, s| {
            let a = t.constant(random(3, 4, -1.0, 1.0, s));
            let y = t.add_row(a, x)?;
            t.mul(y, y)
        }),
        case("mul", (3, 4), Signed, |t, x, s| {
            let c = t.constant(random(3, 4, -1.0, 1.0, s));
            t.mul(x, c)
        }),
        case("mul_row", (1, 4), Signed, |t, x, s| {
            let a = t.constant(random(3, 4, -1.0, 1.0, s));
            let y = t.mul_row(a, x)?;
            t.mul_row(y, x)
        }),
        case("mul_row_matrix", (3, 4), Signed, |t, x, s| {
            let r = t.constant(random(1, 4, -1.0, 1.0, s));
            t.mul_row(x, r)
        }),
        case("scale", (3, 4), Signed, |t, x, _| t.scale(x, -2.5)),
        case("add_scalar", (3, 4), Signed, |t, x, _| {
            let y = t.add_scalar(x, 0.7)?;
            t.mul(y, y)
        }),
        case("relu", (3, 4), AwayFromZero, |t, x, _| t.relu(x)),
        case("sigmoid", (3, 4), Signed, |t, x, _| t.sigmoid(x)),
        case("softplus", (3, 4), Signed, |t, x, _| t.softplus(x)),
        case("exp", (3, 4), Signed, |t, x, _| t.exp(x)),
        case("log", (3, 4), Positive, |t, x, _| t.log(x)),
        case("log1p", (3, 4), Positive, |t, x, _| t.log1p(x)),
        case("clamp_min", (3, 4), AwayFromZero, |t, x, _| t.clamp_min(x, 0.0)),
        case("sum", (3, 4), Signed, |t, x, _| {
            let y = t.sum(x)?;
            t.mul(y, y)
        }),
        case("mean", (3, 4), Signed, |t, x, _| {
            let y = t.mean(x)?;
            t.mul(y, y)
        }),
        case("concat_cols", (3, 2), Signed, |t, x, s| {
            let c = t.constant(random(3, 1, -1.0, 1.0, s));
            let sq = t.mul(x, x)?;
            t.concat_cols(&[x, c, sq])
        }),
        case("concat_rows", (2, 3), Signed, |t, x, s| {
            let c = t.constant(random(1, 3, -1.0, 1.0, s));
            let sq = t.mul(x, x)?;
            t.concat_rows(&[sq, c, x])
        }),
        case("row_softmax", (3, 4), Signed, |t, x, _| t.row_softmax(x)),
        case("log_softmax", (3, 4), Signed, |t, x, _| t.log_softmax(x)),
        case("l2_normalize", (3, 4), AwayFromZero, |t, x, _| t.l2_normalize(x)),
        case("transpose", (3, 4), Signed, |t, x, s| {
            let y = t.transpose(x)?;
            let b = t.constant(random(3, 2, -1.0, 1.0, s));
            t.matmul(y, b)
        }),
        case("reshape", (3, 4), Signed, |t, x, s| {
            let y = t.reshape(x, 2, 6)?;
            let b = t.constant(random(6, 2, -1.0, 1.0, s));
            t.matmul(y, b)
        }),
        case("gather_rows", (3, 4), Signed, |t, x, _| t.gather_rows(x, &[2, 0, 2, 1])),
        case("aggregate", (4, 3), Signed, |t, x, _| {
            let hood = Neighborhoods { offsets: vec![0, 2, 3, 5, 6], targets: vec![1, 2, 0, 0, 3, 2] };
            let y = t.aggregate(x, &hood)?;
            t.mul(y, y)
        }),
        case("symmetric_from_upper", (1, 6), Signed, |t, x, _| {
            let a = t.symmetric_from_upper(x, 4)?;
            t.matmul(a, a)
        }),
        case("matrix_power_chain", (3, 3), Signed, |t, x, _| {
            let chain = t.matrix_power_chain(x, 3)?;
            t.concat_cols(&chain)
        }),
        case("attention_pool", (5, 3), Signed, |t, x, s| {
            let w = t.constant(random(3, 1, -1.0, 1.0, s));
            let scores = t.matmul(x, w)?;
            let mask = [true, false, true, true, false];
            Ok(t.attention_pool(x, scores, Some(&mask))?.output)
        }),
    ]
}

/// Worst relative error per primitive over `instances` random inputs.
pub fn primitive_gradient_errors(instances: usize, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    primitive_cases()
        .into_iter()
        .map(|c| {
            let mut worst: f64 = 0.0;
            for i in 0..instances {
                let s = rng::mix(&[seed, i as u64]);
                worst = worst.max(c.check(&c.input(s), s)?);
            }
            Ok((c.name, worst))
        })
        .collect()
}

fn micro_spec(variant: Variant, input_dim: usize) -> ModelSpec {
    ModelSpec {
        hidden_dim: 4,
        layers: 2,
        hidden_graphs: 2,
        hidden_size: 3,
        walk_length: 2,
        ..ModelSpec::new(variant, input_dim, 3)
    }
}

/// Finite-difference check of every parameter through the full
/// `sup + lambda * con` objective on a batch of 2 labeled and 2 unlabeled
/// graphs, with a memory bank filled by one prior step.
pub fn model_gradient_check(variant: Variant, seed: u64) -> Result<StoreCheck> {
    let data = three_families(12, 5, 7, seed)?.with_degree_features(6)?;
    let model = Model::new(micro_spec(variant, data.feature_dim()), seed)?;
    let config = TrainConfig { batch_size: 2, seed, ..TrainConfig::default() };
    let (tau, lambda) = (config.tau, config.lambda);
    let mut trainer = Trainer::new(model, &data, config)?;
    trainer.train_step(&[3, 4, 5], &[6, 7], 1)?;
    let batch = trainer.next_batch(&[0, 1], &[8, 9])?;
    let model = trainer.model();
    ridders_check_store(
        &model.store,
        |t, b| Ok(build_objective(model, t, b, &batch, trainer.bank(), tau, lambda)?.loss),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub pairs: usize,
    pub max_relative_error: f64,
}

fn random_graph<R: Rng + ?Sized>(n: usize, p: f64, r: &mut R) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::unattributed(n, edges, None).expect("edges are in range")
}

/// Random nonnegative symmetric matrix with zero diagonal and some zero
/// entries.
fn random_hidden<R: Rng + ?Sized>(n: usize, r: &mut R) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(0.7) {
                let w = r.gen_range(0.1..1.5);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

/// Factorized kernel against the explicit product graph on random pairs
/// with `n, n' <= 6` and `p <= 4`.
pub fn kernel_oracle_check(pairs: usize, seed: u64) -> Result<OracleReport> {
    let mut r = rng::stream(&[seed, 0x4F52_434C]);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let n = r.gen_range(1..=6);
        let density = r.gen_range(0.2..0.9);
        let g = random_graph(n, density, &mut r);
        let h = random_hidden(r.gen_range(1..=6), &mut r);
        let p = r.gen_range(0..=4);
        let fast = kernel_value(&g, &h, p)?;
        let slow = direct_product_oracle(&g, &h, p, None, DEFAULT_PRODUCT_CAP)?;
        worst = worst.max(relative_error(fast, slow));
    }
    Ok(OracleReport { pairs, max_relative_error: worst })
}

/// Walks of length 1 in `C3 x K2` (which is `C6`): 12.
pub fn triangle_times_edge() -> Result<(f64, f64)> {
    let c3 = Graph::unattributed(3, cycle(3), None)?;
    let k2 = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?;
    Ok((kernel_value(&c3, &k2, 1)?, direct_product_oracle(&c3, &k2, 1, None, DEFAULT_PRODUCT_CAP)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossInvariants {
    pub instances: usize,
    /// Largest `|sum(p) - 1|`.
    pub max_sum_deviation: f64,
    pub min_loss: f64,
    /// Instances where `loss(p, q)` and `loss(q, p)` differ in any bit.
    pub asymmetric: usize,
    /// Instances where `loss == 0` disagrees with `p == q`.
    pub zero_mismatch: usize,
}

impl LossInvariants {
    pub fn holds(&self) -> bool {
        self.max_sum_deviation <= 1e-12 && self.min_loss >= 0.0 && self.asymmetric == 0 && self.zero_mismatch == 0
    }
}

fn random_vector<R: Rng + ?Sized>(d: usize, r: &mut R) -> Vec<f64> {
    if r.gen_bool(0.05) {
        return vec![0.0; d];
    }
    (0..d).map(|_| r.gen_range(-2.0..2.0)).collect()
}

/// Similarity distributions and the consistency loss on random embeddings
/// and banks. Every third instance compares a distribution with itself.
pub fn loss_invariants(instances: usize, seed: u64) -> Result<LossInvariants> {
    let mut r = rng::stream(&[seed, 0x494E_5641]);
    let mut out =
        LossInvariants { instances, max_sum_deviation: 0.0, min_loss: f64::INFINITY, asymmetric: 0, zero_mismatch: 0 };
    for i in 0..instances {
        let d = r.gen_range(1..=8);
        let m = r.gen_range(1..=12);
        let tau = r.gen_range(0.05..2.0);
        let z_anchors: Vec<Vec<f64>> = (0..m).map(|_| random_vector(d, &mut r)).collect();
        let w_anchors: Vec<Vec<f64>> = (0..m).map(|_| random_vector(d, &mut r)).collect();
        let p = similarity_distribution(&random_vector(d, &mut r), &z_anchors, tau)?;
        let q = if i % 3 == 0 { p.clone() } else { similarity_distribution(&random_vector(d, &mut r), &w_anchors, tau)? };
        for dist in [&p, &q] {
            out.max_sum_deviation = out.max_sum_deviation.max((dist.iter().sum::<f64>() - 1.0).abs());
        }
        let pq = consistency_loss(&p, &q)?;
        let qp = consistency_loss(&q, &p)?;
        out.min_loss = out.min_loss.min(pq);
        if pq.to_bits() != qp.to_bits() {
            out.asymmetric += 1;
        }
        if (pq == 0.0) != (p == q) {
            out.zero_mismatch += 1;
        }
    }
    Ok(out)
}

/// One randomized push sequence against a reference queue. Returns whether
/// the bank matched after every push.
pub fn bank_fifo_sequence(capacity: usize, pushes: &[usize]) -> Result<bool> {
    let mut bank = MemoryBank::new(capacity)?;
    let mut reference = VecDeque::new();
    for &id in pushes {
        bank.push(BankEntry { graph_id: id, z: vec![id as f64], w: vec![-(id as f64)] });
        reference.push_back(id);
        if reference.len() > capacity {
            reference.pop_front();
        }
        let ids: Vec<usize> = bank.entries().map(|e| e.graph_id).collect();
        if bank.len() > capacity || ids.iter().ne(reference.iter()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// [`bank_fifo_sequence`] over `sequences` random capacities and pushes;
/// returns the number of failing sequences.
pub fn bank_fifo_failures(sequences: usize, seed: u64) -> Result<usize> {
    let mut r = rng::stream(&[seed, 0x4649_464F]);
    let mut failures = 0;
    for _ in 0..sequences {
        let capacity = r.gen_range(1..=16);
        let len = r.gen_range(0..=64);
        let pushes: Vec<usize> = (0..len).map(|_| r.gen_range(0..1000)).collect();
        if !bank_fifo_sequence(capacity, &pushes)? {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Whether any gradient reached a tape constant (bank anchors enter the
/// objective as constants) in one full training objective.
pub fn bank_receives_gradient(seed: u64) -> Result<bool> {
    let data = three_families(12, 5, 7, seed)?.with_degree_features(6)?;
    let model = Model::new(micro_spec(Variant::Tgnn, data.feature_dim()), seed)?;
    let config = TrainConfig { batch_size: 2, seed, ..TrainConfig::default() };
    let mut trainer = Trainer::new(model, &data, config)?;
    trainer.train_step(&[3, 4, 5], &[6, 7], 1)?;
    let batch = trainer.next_batch(&[0, 1], &[8, 9])?;
    let mut tape = Tape::new();
    let b = trainer.model().store.bind(&mut tape);
    let obj = build_objective(trainer.model(), &mut tape, &b, &batch, trainer.bank(), 0.5, 1.0)?;
    let grads = tape.backward(obj.loss)?;
    Ok((0..tape.len()).map(Var).any(|v| !tape.requires_grad(v) && grads.get(v).is_some()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_times_edge_is_twelve() {
        assert_eq!(triangle_times_edge().unwrap(), (12.0, 12.0));
    }

    #[test]
    fn small_sweeps_pass() {
        assert!(kernel_oracle_check(20, 1).unwrap().max_relative_error < 1e-9);
        assert!(loss_invariants(100, 1).unwrap().holds());
        assert_eq!(bank_fifo_failures(100, 1).unwrap(), 0);
        assert!(!bank_receives_gradient(1).unwrap());
    }

    #[test]
    fn full_model_gradient() {
        let report = model_gradient_check(Variant::Tgnn, 3).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        for prefix in ["primary.", "secondary.", "classifier."] {
            assert!(report.max_for_prefix(prefix).is_some());
        }
    }

    #[test]
    fn every_variant_gradient_over_several_seeds() {
        for v in Variant::ALL {
            for seed in 10..13 {
                let report = model_gradient_check(v, seed).unwrap();
                assert!(report.max_relative_error < 1e-4, "{v} seed {seed}: {report:?}");
            }
        }
    }
}
