//! Training steps, the epoch loop and evaluation.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::bank::{BankEntry, MemoryBank, DEFAULT_CAPACITY};
use super::loss::{consistency_on_tape, cross_entropy, similarity_on_tape, DEFAULT_TAU};
use super::model::Model;
use crate::adam::{AdamConfig, AdamState};
use crate::augment::{random_augment, AugmentConfig};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::params::Bindings;
use crate::rng;
use crate::split::SplitDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    /// Weight of the consistency term.
    pub lambda: f64,
    pub bank_capacity: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            lambda: 1.0,
            bank_capacity: DEFAULT_CAPACITY,
            batch_size: 64,
            epochs: 300,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("need tau > 0 and lambda >= 0 (got {}, {})", self.tau, self.lambda)));
        }
        if self.bank_capacity == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("bank capacity and batch size must be positive".into()));
        }
        self.adam.validate()?;
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub sup_loss: f64,
    pub con_loss: f64,
    pub total_loss: f64,
    pub epoch: usize,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sup_loss: f64,
    pub con_loss: f64,
    pub val_acc: f64,
}

/// Two augmented views of one graph: `first` feeds the primary encoder and
/// `second` the partner encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub graph_id: usize,
    pub first: Graph,
    pub second: Graph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    pub labeled: Vec<View>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<View>,
}

/// Views for `ids` at global step `step`. Each (graph, step, view) triple has
/// its own random stream.
pub fn make_views(
    dataset: &Dataset,
    ids: &[usize],
    augment: &AugmentConfig,
    feature_mean: &[f64],
    seed: u64,
    step: u64,
) -> Result<Vec<View>> {
    ids.iter()
        .map(|&id| {
            let g = &dataset.graphs[id];
            let (_, first) = random_augment(g, augment, feature_mean, &mut rng::view_stream(seed, id, step, 0))?;
            let (_, second) = random_augment(g, augment, feature_mean, &mut rng::view_stream(seed, id, step, 1))?;
            Ok(View { graph_id: id, first, second })
        })
        .collect()
}

/// Loss nodes of one step. `con` is absent when the model has no partner
/// encoder, the bank is empty, or the batch has no unlabeled graphs.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub loss: Var,
    pub sup: Var,
    pub con: Option<Var>,
    /// Primary embeddings of the labeled views (`B x d`).
    pub labeled_z: Var,
    /// Partner embeddings of the labeled views.
    pub labeled_w: Option<Var>,
}

fn firsts(views: &[View]) -> Vec<&Graph> {
    views.iter().map(|v| &v.first).collect()
}

fn seconds(views: &[View]) -> Vec<&Graph> {
    views.iter().map(|v| &v.second).collect()
}

/// Records `sup + lambda * con` for one batch on `tape`. Bank anchors enter
/// as constants.
pub fn build_objective(
    model: &Model,
    tape: &mut Tape,
    b: &Bindings,
    batch: &StepBatch,
    bank: &MemoryBank,
    tau: f64,
    lambda: f64,
) -> Result<Objective> {

    let labeled_z = model.primary.forward_batch(tape, b, &firsts(&batch.labeled))?;
    let logits = model.classifier.forward(tape, b, labeled_z)?;
    let sup = cross_entropy(tape, logits, &batch.labels)?;

    let Some(partner) = &model.secondary else {
        return Ok(Objective { loss: sup, sup, con: None, labeled_z, labeled_w: None });
    };
    let labeled_w = Some(partner.forward_batch(tape, b, &seconds(&batch.labeled))?);
    if bank.is_empty() || batch.unlabeled.is_empty() {
        return Ok(Objective { loss: sup, sup, con: None, labeled_z, labeled_w });
    }
    let z = model.primary.forward_batch(tape, b, &firsts(&batch.unlabeled))?;
    let w = partner.forward_batch(tape, b, &seconds(&batch.unlabeled))?;
    let p = similarity_on_tape(tape, z, &bank.z_anchors()?, tau)?;
    let q = similarity_on_tape(tape, w, &bank.w_anchors()?, tau)?;
    let con = consistency_on_tape(tape, p, q)?;
    let weighted = tape.scale(con, lambda)?;
    let loss = tape.add(sup, weighted)?;
    Ok(Objective { loss, sup, con: Some(con), labeled_z, labeled_w })
}

/// Owns the model, optimizer state and memory bank during training.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    model: Model,
    adam: AdamState,
    bank: MemoryBank,
    config: TrainConfig,
    dataset: &'a Dataset,
    feature_mean: Vec<f64>,
    step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.feature_dim() != model.spec.input_dim {
            return Err(Error::InvalidArgument(format!(
                "dataset feature dim {} but model expects {}",
                dataset.feature_dim(),
                model.spec.input_dim
            )));
        }
        let adam = AdamState::new(config.adam, &model.store)?;
        let bank = MemoryBank::new(config.bank_capacity)?;
        let feature_mean = dataset.feature_mean();
        Ok(Self { model, adam, bank, config, dataset, feature_mean, step: 0 })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn augment_config(&self) -> AugmentConfig {
        if self.model.variant().augments() {
            self.config.augment.clone()
        } else {
            AugmentConfig::identity()
        }
    }

    /// Views of the labeled and unlabeled batches for the next step.
    pub fn next_batch(&self, labeled: &[usize], unlabeled: &[usize]) -> Result<StepBatch> {
        let aug = self.augment_config();
        let labels = labeled
            .iter()
            .map(|&i| self.dataset.graphs[i].label().ok_or_else(|| Error::InvalidArgument(format!("graph {i} has no label"))))
            .collect::<Result<Vec<_>>>()?;
        let mk = |ids: &[usize]| make_views(self.dataset, ids, &aug, &self.feature_mean, self.config.seed, self.step);
        let unlabeled = if self.model.variant().uses_consistency() { mk(unlabeled)? } else { Vec::new() };
        Ok(StepBatch { labeled: mk(labeled)?, labels, unlabeled })
    }

    /// One optimizer step on `sup + lambda * con`, then the labeled batch's
    /// detached embeddings are enqueued in the bank.
    pub fn train_step(&mut self, labeled: &[usize], unlabeled: &[usize], epoch: usize) -> Result<LossReport> {
        let step = self.step;
        let diverged = |e: Error| match e {
            Error::NonFinite { .. } => Error::Divergence { epoch, step },
            other => other,
        };
        let batch = self.next_batch(labeled, unlabeled)?;
        let mut tape = Tape::new();
        let b = self.model.store.bind(&mut tape);
        let obj = build_objective(&self.model, &mut tape, &b, &batch, &self.bank, self.config.tau, self.config.lambda)
            .map_err(diverged)?;
        let total_loss = tape.value(obj.loss).item();
        if !total_loss.is_finite() {
            return Err(Error::Divergence { epoch, step });
        }
        let report = LossReport {
            sup_loss: tape.value(obj.sup).item(),
            con_loss: obj.con.map_or(0.0, |c| tape.value(c).item()),
            total_loss,
            epoch,
            step,
        };
        let grads = tape.backward(obj.loss).map_err(diverged)?;
        self.model.store.accumulate_grads(&b, &grads);
        self.adam.step(&mut self.model.store);

        let z = tape.value(obj.labeled_z);
        let w = obj.labeled_w.map(|w| tape.value(w));
        for (r, view) in batch.labeled.iter().enumerate() {
            self.bank.push(BankEntry {
                graph_id: view.graph_id,
                z: z.row_slice(r).to_vec(),
                w: w.map_or_else(Vec::new, |w| w.row_slice(r).to_vec()),
            });
        }
        self.step += 1;
        Ok(report)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `(correct, total)` per class.
    pub per_class: Vec<(usize, usize)>,
}

const EVAL_CHUNK: usize = 64;

/// Accuracy of the classifier on clean graphs. An empty index list gives
/// accuracy 0.
pub fn evaluate(model: &Model, dataset: &Dataset, ids: &[usize]) -> Result<Evaluation> {
    let mut eval = Evaluation { per_class: alloc::vec![(0, 0); model.spec.num_classes], ..Default::default() };
    for chunk in ids.chunks(EVAL_CHUNK) {
        let graphs: Vec<&Graph> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
        let predicted = model.predict(&graphs)?;
        for (g, pred) in graphs.iter().zip(predicted) {
            let label = g.label().ok_or_else(|| Error::InvalidArgument("evaluating an unlabeled graph".into()))?;
            let slot = eval
                .per_class
                .get_mut(label)
                .ok_or(Error::InvalidLabel { label, num_classes: model.spec.num_classes })?;
            slot.1 += 1;
            eval.total += 1;
            if pred == label {
                slot.0 += 1;
                eval.correct += 1;
            }
        }
    }
    if eval.total > 0 {
        eval.accuracy = eval.correct as f64 / eval.total as f64;
    }
    Ok(eval)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub steps: u64,
}

const BATCH_STREAM: u64 = 0x4241_5443;

/// Runs `config.epochs` epochs and keeps the parameters with the best
/// validation accuracy (earliest epoch on ties). Without a validation set the
/// final parameters are kept.
pub fn fit(dataset: &Dataset, split: &SplitDataset, model: Model, config: &TrainConfig) -> Result<FitResult> {
    if split.labeled_train.is_empty() {
        return Err(Error::InvalidArgument("no labeled training graphs".into()));
    }
    let mut best_model = model.clone();
    let mut trainer = Trainer::new(model, dataset, config.clone())?;
    let mut best_epoch = 0;
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);
    let batch = config.batch_size;
    let steps = split.unlabeled_train.len().div_ceil(batch).max(split.labeled_train.len().div_ceil(batch)).max(1);

    for epoch in 1..=config.epochs {
        let mut r = rng::stream(&[config.seed, BATCH_STREAM, epoch as u64]);
        let mut labeled = split.labeled_train.clone();
        let mut unlabeled = split.unlabeled_train.clone();
        labeled.shuffle(&mut r);
        unlabeled.shuffle(&mut r);
        let (mut sup, mut con) = (0.0, 0.0);
        for s in 0..steps {
            let lb: Vec<usize> = if labeled.len() >= batch {
                (0..batch).map(|i| labeled[(s * batch + i) % labeled.len()]).collect()
            } else {
                (0..batch).map(|_| labeled[r.gen_range(0..labeled.len())]).collect()
            };
            let start = (s * batch).min(unlabeled.len());
            let ub = &unlabeled[start..(start + batch).min(unlabeled.len())];
            let report = trainer.train_step(&lb, ub, epoch)?;
            sup += report.sup_loss;
            con += report.con_loss;
        }
        let val_acc = evaluate(trainer.model(), dataset, &split.validation)?.accuracy;
        history.push(EpochRecord { epoch, sup_loss: sup / steps as f64, con_loss: con / steps as f64, val_acc });
        if split.validation.is_empty() || val_acc > best_val_acc {
            best_val_acc = val_acc;
            best_epoch = epoch;
            best_model = trainer.model().clone();
        }
    }
    let steps = trainer.steps_taken();
    if best_epoch == 0 {
        best_val_acc = evaluate(&best_model, dataset, &split.validation)?.accuracy;
    }
    Ok(FitResult { model: best_model, history, best_epoch, best_val_acc, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{split_dataset, DEFAULT_RATIOS};
    use crate::synthetic::three_families;
    use crate::trainer::model::{ModelSpec, Variant};
    use alloc::vec;

    fn small_spec(variant: Variant, d: &Dataset) -> ModelSpec {
        ModelSpec {
            hidden_dim: 8,
            layers: 2,
            hidden_graphs: 3,
            hidden_size: 4,
            walk_length: 2,
            ..ModelSpec::new(variant, d.feature_dim(), d.num_classes)
        }
    }

    fn setup(variant: Variant) -> (Dataset, SplitDataset, Model) {
        let d = three_families(30, 6, 9, 2).unwrap();
        let s = split_dataset(&d, DEFAULT_RATIOS, 2).unwrap();
        let m = Model::new(small_spec(variant, &d), 2).unwrap();
        (d, s, m)
    }

    fn config() -> TrainConfig {
        TrainConfig { batch_size: 8, epochs: 3, seed: 5, ..TrainConfig::default() }
    }

    #[test]
    fn empty_bank_step_is_supervised_only() {
        let (d, s, m) = setup(Variant::Tgnn);
        let mut t = Trainer::new(m, &d, config()).unwrap();
        let r = t.train_step(&s.labeled_train, &s.unlabeled_train, 1).unwrap();
        assert_eq!(r.con_loss, 0.0);
        assert_eq!(r.total_loss, r.sup_loss);
        assert_eq!(t.bank().len(), s.labeled_train.len());
        let r = t.train_step(&s.labeled_train, &s.unlabeled_train, 1).unwrap();
        assert!(r.con_loss > 0.0);
        assert_eq!(r.total_loss, r.sup_loss + 1.0 * r.con_loss);
    }

    #[test]
    fn total_is_sup_plus_weighted_con() {
        let (d, s, m) = setup(Variant::Tgnn);
        let mut t = Trainer::new(m, &d, TrainConfig { lambda: 0.37, ..config() }).unwrap();
        for _ in 0..3 {
            let r = t.train_step(&s.labeled_train, &s.unlabeled_train, 1).unwrap();
            assert_eq!(r.total_loss, r.sup_loss + 0.37 * r.con_loss);
        }
    }

    #[test]
    fn zero_lambda_leaves_kernel_gradients_zero() {
        let (d, s, m) = setup(Variant::Tgnn);
        let mut t = Trainer::new(m.clone(), &d, TrainConfig { lambda: 0.0, ..config() }).unwrap();
        t.train_step(&s.labeled_train, &s.unlabeled_train, 1).unwrap();
        let batch = t.next_batch(&s.labeled_train, &s.unlabeled_train).unwrap();
        assert!(!t.bank().is_empty());
        let mut tape = Tape::new();
        let b = t.model().store.bind(&mut tape);
        let obj = build_objective(t.model(), &mut tape, &b, &batch, t.bank(), 0.5, 0.0).unwrap();
        assert!(obj.con.is_some());
        let grads = tape.backward(obj.loss).unwrap();
        for id in t.model().secondary_params() {
            if let Some(g) = grads.get(b[id]) {
                assert!(g.data().iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn bank_storage_receives_no_gradient() {
        let (d, s, m) = setup(Variant::Tgnn);
        let mut t = Trainer::new(m, &d, config()).unwrap();
        t.train_step(&s.labeled_train, &s.unlabeled_train, 1).unwrap();
        let batch = t.next_batch(&s.labeled_train, &s.unlabeled_train).unwrap();
        let mut tape = Tape::new();
        let b = t.model().store.bind(&mut tape);
        let before = tape.len();
        let obj = build_objective(t.model(), &mut tape, &b, &batch, t.bank(), 0.5, 1.0).unwrap();
        let grads = tape.backward(obj.loss).unwrap();
        let mut constants = 0;
        for i in before..tape.len() {
            let v = Var(i);
            if !tape.requires_grad(v) {
                constants += 1;
                assert!(grads.get(v).is_none());
            }
        }
        assert!(constants > 0);
    }

    #[test]
    fn classifier_ignores_partner_encoder() {
        let (d, s, full) = setup(Variant::Tgnn);
        let sup_only = Model::new(small_spec(Variant::MpSup, &d), 2).unwrap();
        let t = Trainer::new(full.clone(), &d, config()).unwrap();
        let batch = t.next_batch(&s.labeled_train, &[]).unwrap();
        let sup_of = |m: &Model| {
            let mut tape = Tape::new();
            let b = m.store.bind(&mut tape);
            let obj = build_objective(m, &mut tape, &b, &batch, t.bank(), 0.5, 1.0).unwrap();
            tape.value(obj.sup).item().to_bits()
        };
        assert_eq!(sup_of(&full), sup_of(&sup_only));
    }

    #[test]
    fn identity_views_for_no_aug() {
        let (d, s, m) = setup(Variant::NoAug);
        let t = Trainer::new(m, &d, config()).unwrap();
        let batch = t.next_batch(&s.labeled_train, &s.unlabeled_train).unwrap();
        for v in batch.labeled.iter().chain(&batch.unlabeled) {
            assert_eq!(v.first, d.graphs[v.graph_id]);
            assert_eq!(v.second, d.graphs[v.graph_id]);
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let (d, s, m) = setup(Variant::Tgnn);
        let out = fit(&d, &s, m.clone(), &TrainConfig { epochs: 0, ..config() }).unwrap();
        assert_eq!(out.model, m);
        assert!(out.history.is_empty());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn fit_is_deterministic() {
        let (d, s, m) = setup(Variant::Tgnn);
        let a = fit(&d, &s, m.clone(), &config()).unwrap();
        let b = fit(&d, &s, m, &config()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.len(), 3);
    }

    #[test]
    fn supervised_variants_never_report_consistency() {
        for v in [Variant::MpSup, Variant::GkSup] {
            let (d, s, m) = setup(v);
            let out = fit(&d, &s, m, &config()).unwrap();
            assert!(out.history.iter().all(|r| r.con_loss == 0.0), "{v}");
        }
    }

    #[test]
    fn every_variant_trains_and_evaluates() {
        for v in Variant::ALL {
            let (d, s, m) = setup(v);
            let out = fit(&d, &s, m, &TrainConfig { epochs: 1, ..config() }).unwrap();
            let e = evaluate(&out.model, &d, &s.test).unwrap();
            assert!((0.0..=1.0).contains(&e.accuracy), "{v}");
            assert_eq!(e.total, s.test.len());
        }
    }

    #[test]
    fn evaluate_counts_and_purity() {
        let (d, s, m) = setup(Variant::Tgnn);
        let before = m.clone();
        let e = evaluate(&m, &d, &s.test).unwrap();
        assert_eq!(m, before);
        assert_eq!(e.per_class.iter().map(|c| c.1).sum::<usize>(), s.test.len());
        assert_eq!(e.per_class.iter().map(|c| c.0).sum::<usize>(), e.correct);
        assert_eq!(evaluate(&m, &d, &[]).unwrap().accuracy, 0.0);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let (d, _, mut m) = setup(Variant::MpSup);
        // zero the last layer and bias class 0 so every graph is predicted 0
        let w2 = m.classifier.w2;
        let b2 = m.classifier.b2;
        m.store.value_mut(w2).data_mut().iter_mut().for_each(|x| *x = 0.0);
        m.store.value_mut(b2).set(0, 0, 1.0);
        let ids = vec![0, 1];
        assert_eq!(d.graphs[0].label(), Some(0));
        assert_eq!(d.graphs[1].label(), Some(1));
        assert_eq!(evaluate(&m, &d, &ids).unwrap().accuracy, 0.5);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (d, s, m) = setup(Variant::MpSup);
        let cfg = TrainConfig { adam: AdamConfig { learning_rate: 1e306, ..AdamConfig::default() }, epochs: 5, ..config() };
        assert!(matches!(fit(&d, &s, m, &cfg), Err(Error::Divergence { .. })));
    }
}
