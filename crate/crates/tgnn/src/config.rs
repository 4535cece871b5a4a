//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Later assignments win, so CLI
//! overrides are applied by [`RunConfig::set`] after the file is read. Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `dataset` | `synthetic` | `synthetic` or a TU dataset directory |
//! | `synthetic_graphs` | 300 | graphs in the synthetic dataset |
//! | `synthetic_min_nodes`, `synthetic_max_nodes` | 6, 12 | synthetic size range |
//! | `data_seed` | 0 | seed for the synthetic dataset |
//! | `max_degree` | 64 | degree cap for featureless datasets |
//! | `ratios` | `2:5:1:2` | labeled : unlabeled : validation : test |
//! | `seeds` | `1,2,3,4,5` | list, or a range `a..b` (inclusive) |
//! | `label_ratio` | 1 | fraction of the labeled split kept labeled |
//! | `variant` | `tgnn` | `tgnn`, `mp-sup`, `gk-sup`, `mp-ensemble`, `gk-ensemble`, `no-aug` |
//! | `hidden_dim` (`d`) | 64 | embedding width |
//! | `layers` (`K`) | 3 | message passing layers |
//! | `hidden_graphs` (`N`) | 16 | number of hidden graphs |
//! | `hidden_size` | 5 | nodes per hidden graph |
//! | `walk_length` (`P`) | 3 | maximum walk length |
//! | `kernel_log1p` | false | feed `log(1 + H)` to the kernel head |
//! | `tau` | 0.5 | similarity temperature |
//! | `lambda` | 1 | consistency weight |
//! | `bank_capacity` (`M`) | 256 | memory bank size |
//! | `epochs` | 300 | |
//! | `batch_size` (`batch`) | 64 | |
//! | `learning_rate` (`lr`) | 0.001 | Adam step size |
//! | `edge_drop`, `node_drop`, `attr_mask`, `subgraph` | 0.2 | augmentation ratio, or `off` |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use tgnn_core::adam::AdamConfig;
use tgnn_core::augment::AugmentConfig;
use tgnn_core::split::DEFAULT_RATIOS;
use tgnn_core::trainer::{ModelSpec, TrainConfig, Variant};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { graphs: usize, min_nodes: usize, max_nodes: usize },
    Tu(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub data_seed: u64,
    pub max_degree: usize,
    pub ratios: [u32; 4],
    pub seeds: Vec<u64>,
    pub label_ratio: f64,
    pub variant: Variant,
    pub hidden_dim: usize,
    pub layers: usize,
    pub hidden_graphs: usize,
    pub hidden_size: usize,
    pub walk_length: usize,
    pub kernel_log1p: bool,
    pub tau: f64,
    pub lambda: f64,
    pub bank_capacity: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augment: AugmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let spec = ModelSpec::new(Variant::Tgnn, 1, 2);
        Self {
            dataset: DatasetSource::Synthetic { graphs: 300, min_nodes: 6, max_nodes: 12 },
            data_seed: 0,
            max_degree: tgnn_core::graph::DEFAULT_MAX_DEGREE,
            ratios: DEFAULT_RATIOS,
            seeds: (1..=5).collect(),
            label_ratio: 1.0,
            variant: Variant::Tgnn,
            hidden_dim: spec.hidden_dim,
            layers: spec.layers,
            hidden_graphs: spec.hidden_graphs,
            hidden_size: spec.hidden_size,
            walk_length: spec.walk_length,
            kernel_log1p: spec.kernel_log1p,
            tau: train.tau,
            lambda: train.lambda,
            bank_capacity: train.bank_capacity,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.adam.learning_rate,
            augment: train.augment,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_ratio(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "off" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (parse("seeds", a.trim())?, parse("seeds", b.trim())?);
        return Ok((a..=b).collect());
    }
    value.split(',').map(|s| parse("seeds", s.trim())).collect()
}

fn show_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "off".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&crate::error::read_to_string(path)?)
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<'a>(mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = if value == "synthetic" {
                    match self.dataset {
                        DatasetSource::Synthetic { .. } => self.dataset.clone(),
                        DatasetSource::Tu(_) => Self::default().dataset,
                    }
                } else {
                    DatasetSource::Tu(PathBuf::from(value))
                }
            }
            "synthetic_graphs" | "synthetic_min_nodes" | "synthetic_max_nodes" => {
                let DatasetSource::Synthetic { graphs, min_nodes, max_nodes } = &mut self.dataset else {
                    return Err(Error::Config(format!("`{key}` needs dataset = synthetic")));
                };
                let slot = match key {
                    "synthetic_graphs" => graphs,
                    "synthetic_min_nodes" => min_nodes,
                    _ => max_nodes,
                };
                *slot = parse(key, value)?;
            }
            "data_seed" => self.data_seed = parse(key, value)?,
            "max_degree" => self.max_degree = parse(key, value)?,
            "ratios" => {
                let parts: Vec<u32> = value.split(':').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
                self.ratios = parts.try_into().map_err(|_| Error::Config("ratios needs four parts a:b:c:d".into()))?;
            }
            "seeds" => self.seeds = parse_seeds(value)?,
            "label_ratio" => self.label_ratio = parse(key, value)?,
            "variant" => self.variant = Variant::parse(value).map_err(|e| Error::Config(e.to_string()))?,
            "hidden_dim" | "d" => self.hidden_dim = parse(key, value)?,
            "layers" | "K" => self.layers = parse(key, value)?,
            "hidden_graphs" | "N" => self.hidden_graphs = parse(key, value)?,
            "hidden_size" => self.hidden_size = parse(key, value)?,
            "walk_length" | "P" => self.walk_length = parse(key, value)?,
            "kernel_log1p" => self.kernel_log1p = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "bank_capacity" | "M" => self.bank_capacity = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" | "batch" => self.batch_size = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "edge_drop" => self.augment.edge_drop = parse_ratio(key, value)?,
            "node_drop" => self.augment.node_drop = parse_ratio(key, value)?,
            "attr_mask" => self.augment.attr_mask = parse_ratio(key, value)?,
            "subgraph" => self.augment.subgraph = parse_ratio(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.label_ratio > 0.0 && self.label_ratio <= 1.0) {
            return Err(Error::Config(format!("label_ratio {} outside (0, 1]", self.label_ratio)));
        }
        if self.ratios.contains(&0) {
            return Err(Error::Config("ratios must be positive".into()));
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        ModelSpec {
            variant: self.variant,
            input_dim,
            num_classes,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            hidden_graphs: self.hidden_graphs,
            hidden_size: self.hidden_size,
            walk_length: self.walk_length,
            kernel_log1p: self.kernel_log1p,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            tau: self.tau,
            lambda: self.lambda,
            bank_capacity: self.bank_capacity,
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam: AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() },
            augment: self.augment.clone(),
            seed,
        }
    }

    /// Every key with its current value, in documentation order. Parsing the
    /// rendered text gives back an equal config.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match &self.dataset {
            DatasetSource::Synthetic { graphs, min_nodes, max_nodes } => {
                out.push(("dataset", "synthetic".to_string()));
                out.push(("synthetic_graphs", graphs.to_string()));
                out.push(("synthetic_min_nodes", min_nodes.to_string()));
                out.push(("synthetic_max_nodes", max_nodes.to_string()));
            }
            DatasetSource::Tu(p) => out.push(("dataset", p.display().to_string())),
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let [a, b, c, d] = self.ratios;
        out.extend([
            ("data_seed", self.data_seed.to_string()),
            ("max_degree", self.max_degree.to_string()),
            ("ratios", format!("{a}:{b}:{c}:{d}")),
            ("seeds", seeds.join(",")),
            ("label_ratio", self.label_ratio.to_string()),
            ("variant", self.variant.name().to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden_graphs", self.hidden_graphs.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("walk_length", self.walk_length.to_string()),
            ("kernel_log1p", self.kernel_log1p.to_string()),
            ("tau", self.tau.to_string()),
            ("lambda", self.lambda.to_string()),
            ("bank_capacity", self.bank_capacity.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("edge_drop", show_ratio(self.augment.edge_drop)),
            ("node_drop", show_ratio(self.augment.node_drop)),
            ("attr_mask", show_ratio(self.augment.attr_mask)),
            ("subgraph", show_ratio(self.augment.subgraph)),
        ]);
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            writeln!(s, "{k} = {v}").expect("string write");
        }
        s
    }
}
