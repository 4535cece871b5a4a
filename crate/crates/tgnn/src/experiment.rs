//! Seeded runs, aggregation and parameter sweeps.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use tgnn_core::split::split_dataset;
use tgnn_core::synthetic::three_families;
use tgnn_core::trainer::{evaluate, fit, EpochRecord, Model};
use tgnn_core::Dataset;

use crate::config::{DatasetSource, RunConfig};
use crate::error::{Error, Result};
use crate::tu::load_tu_dataset;

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub outcomes: Vec<SeedOutcome>,
    pub mean: f64,
    /// Population standard deviation over the seeds.
    pub std: f64,
    pub wall_time: Duration,
    /// Conventions that affect how the numbers should be read.
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.test_accuracy).collect()
    }
}

/// `(mean, population std)`; both 0 for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic { graphs, min_nodes, max_nodes } => {
            Ok(three_families(*graphs, *min_nodes, *max_nodes, config.data_seed)?)
        }
        DatasetSource::Tu(path) => load_tu_dataset(path, config.max_degree),
    }
}

/// Split, build, fit and test for one seed.
pub fn run_seed(config: &RunConfig, dataset: &Dataset, seed: u64) -> Result<SeedOutcome> {
    let mut split = split_dataset(dataset, config.ratios, seed)?;
    if config.label_ratio < 1.0 {
        split = split.restrict_labeled(dataset, config.label_ratio)?;
    }
    let model = Model::new(config.model_spec(dataset.feature_dim(), dataset.num_classes), seed)?;
    let out = fit(dataset, &split, model, &config.train_config(seed))?;
    let test = evaluate(&out.model, dataset, &split.test)?;
    Ok(SeedOutcome {
        seed,
        test_accuracy: test.accuracy,
        best_epoch: out.best_epoch,
        best_val_acc: out.best_val_acc,
        history: out.history,
        model: out.model,
    })
}

fn notes(config: &RunConfig, dataset: &Dataset) -> Vec<String> {
    let mut notes = vec![
        format!("bank capacity {} holding augmented-view embeddings of recent labeled batches", config.bank_capacity),
        "consistency averaged over each unlabeled minibatch".to_string(),
        "standard deviation is the population formula".to_string(),
    ];
    if config.variant.augments() {
        notes.push(format!(
            "augmentations picked uniformly from the enabled kinds; subgraph grows by random walk; ratios {:?}",
            config.augment
        ));
    } else {
        notes.push("identity augmentations".to_string());
    }
    if !dataset_has_inputs(config) {
        notes.push(format!("featureless graphs use one-hot degrees capped at {}", config.max_degree));
    }
    notes.push(format!("dataset `{}`: {} graphs, {} classes", dataset.name, dataset.len(), dataset.num_classes));
    notes
}

fn dataset_has_inputs(config: &RunConfig) -> bool {
    let DatasetSource::Tu(dir) = &config.dataset else { return false };
    std::fs::read_dir(dir)
        .map(|entries| {
            entries.filter_map(|e| e.ok()).any(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.ends_with("_node_labels.txt") || name.ends_with("_node_attributes.txt")
            })
        })
        .unwrap_or(false)
}

/// Runs every seed (in parallel, results in seed order) and aggregates the
/// test accuracies.
pub fn run_experiment(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let dataset = load_dataset(config)?;
    let outcomes = config.seeds.par_iter().map(|&seed| run_seed(config, &dataset, seed)).collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&outcomes.iter().map(|o| o.test_accuracy).collect::<Vec<_>>());
    Ok(RunReport { config: config.clone(), outcomes, mean, std, wall_time: start.elapsed(), notes: notes(config, &dataset) })
}

/// Parameters [`sweep`] accepts, with the config key each one sets.
pub const SWEEP_PARAMETERS: [(&str, &str); 5] =
    [("d", "hidden_dim"), ("P", "walk_length"), ("label_ratio", "label_ratio"), ("lambda", "lambda"), ("M", "bank_capacity")];

fn sweep_key(parameter: &str) -> Result<&'static str> {
    SWEEP_PARAMETERS
        .iter()
        .find(|(name, key)| *name == parameter || *key == parameter)
        .map(|(_, key)| *key)
        .ok_or_else(|| {
            let names: Vec<&str> = SWEEP_PARAMETERS.iter().map(|p| p.0).collect();
            Error::Config(format!("cannot sweep `{parameter}`; choose one of {names:?}"))
        })
}

/// One report per value of `parameter`.
pub fn sweep(config: &RunConfig, parameter: &str, values: &[String]) -> Result<Vec<(String, RunReport)>> {
    let key = sweep_key(parameter)?;
    values
        .iter()
        .map(|v| {
            let cfg = config.clone().with_overrides([format!("{key}={v}").as_str()])?;
            Ok((v.clone(), run_experiment(&cfg)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig::default()
            .with_overrides([
                "synthetic_graphs=30",
                "synthetic_max_nodes=8",
                "d=8",
                "K=2",
                "N=3",
                "hidden_size=4",
                "P=2",
                "epochs=2",
                "batch=8",
                "seeds=1,2",
            ])
            .unwrap()
    }

    #[test]
    fn mean_std_matches_recomputation() {
        let (m, s) = mean_std(&[0.5, 0.75, 1.0]);
        assert!((m - 0.75).abs() < 1e-12);
        assert!((s - (0.125f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[0.8; 5]), (0.8, 0.0));
    }

    #[test]
    fn report_covers_every_seed() {
        let r = run_experiment(&tiny()).unwrap();
        assert_eq!(r.outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![1, 2]);
        let (m, s) = mean_std(&r.accuracies());
        assert_eq!((m, s), (r.mean, r.std));
    }

    #[test]
    fn sweep_rows_and_errors() {
        assert!(sweep(&tiny(), "P", &[]).unwrap().is_empty());
        let rows = sweep(&tiny().with_overrides(["seeds=1"]).unwrap(), "P", &["1".into(), "2".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].1.config.walk_length, 2);
        assert!(sweep(&tiny(), "epochs", &["1".into()]).is_err());
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let a = run_experiment(&tiny()).unwrap();
        let b = run_experiment(&tiny()).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.history, y.history);
            assert_eq!(x.model, y.model);
        }
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }
}
