use rand::seq::SliceRandom;
use tgnn_core::rng;
use tgnn_core::split::{split_dataset, DEFAULT_RATIOS};
use tgnn_core::synthetic::three_families;
use tgnn_core::trainer::{evaluate, fit, Model, ModelSpec, TrainConfig, Variant};
use tgnn_core::Dataset;

fn small_spec(variant: Variant, data: &Dataset) -> ModelSpec {
    ModelSpec {
        hidden_dim: 16,
        layers: 2,
        hidden_graphs: 6,
        hidden_size: 4,
        walk_length: 2,
        ..ModelSpec::new(variant, data.feature_dim(), data.num_classes)
    }
}

#[test]
fn tgnn_learns_the_three_families() {
    let data = three_families(90, 6, 10, 3).unwrap();
    let split = split_dataset(&data, DEFAULT_RATIOS, 3).unwrap();
    let model = Model::new(small_spec(Variant::Tgnn, &data), 3).unwrap();
    let untrained = evaluate(&model, &data, &split.test).unwrap().accuracy;
    let config = TrainConfig { epochs: 40, batch_size: 16, ..TrainConfig::default() };
    let out = fit(&data, &split, model, &config).unwrap();
    let trained = evaluate(&out.model, &data, &split.test).unwrap();
    assert!(trained.accuracy >= 0.8, "accuracy {} (untrained {untrained})", trained.accuracy);
    assert_eq!(out.history.len(), 40);
    assert!(out.history.iter().all(|r| r.con_loss >= 0.0));
}

#[test]
fn predictions_ignore_node_order() {
    let data = three_families(12, 5, 9, 8).unwrap();
    let model = Model::new(small_spec(Variant::Tgnn, &data), 1).unwrap();
    let mut r = rng::stream(&[42]);
    for g in &data.graphs {
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        perm.shuffle(&mut r);
        let p = g.permuted(&perm).unwrap();
        let mut tape = tgnn_core::autodiff::Tape::new();
        let b = model.store.bind(&mut tape);
        let a = model.logits(&mut tape, &b, &[g]).unwrap();
        let c = model.logits(&mut tape, &b, &[&p]).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(tape.value(a).data()), bits(tape.value(c).data()));
    }
}

#[test]
fn identical_seeds_give_identical_histories_and_parameters() {
    let data = three_families(30, 5, 8, 1).unwrap();
    let split = split_dataset(&data, DEFAULT_RATIOS, 1).unwrap();
    let config = TrainConfig { epochs: 4, batch_size: 8, seed: 5, ..TrainConfig::default() };
    let run = || fit(&data, &split, Model::new(small_spec(Variant::Tgnn, &data), 5).unwrap(), &config).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    for ((_, pa), (_, pb)) in a.model.store.iter().zip(b.model.store.iter()) {
        assert_eq!(pa.value, pb.value);
    }
    let other = fit(
        &data,
        &split,
        Model::new(small_spec(Variant::Tgnn, &data), 5).unwrap(),
        &TrainConfig { seed: 6, ..config },
    )
    .unwrap();
    assert_ne!(a.history, other.history);
}
