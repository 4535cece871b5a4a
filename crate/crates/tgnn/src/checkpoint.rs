//! JSON parameter checkpoints.
//!
//! ```text
//! {"format": "tgnn-checkpoint", "version": 1,
//!  "model": {"variant": "tgnn", "input_dim": 65, ...},
//!  "params": [{"name": "primary.layer0.w1", "rows": 65, "cols": 64, "values": [...]}, ...]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use tgnn_core::trainer::{Model, ModelSpec, Variant};
use tgnn_core::Tensor;

use crate::error::{read_to_string, write, Error, Result};

pub const FORMAT: &str = "tgnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpecRecord {
    variant: String,
    input_dim: usize,
    num_classes: usize,
    hidden_dim: usize,
    layers: usize,
    hidden_graphs: usize,
    hidden_size: usize,
    walk_length: usize,
    kernel_log1p: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: SpecRecord,
    params: Vec<ParamRecord>,
}

pub fn to_json(model: &Model) -> Result<String> {
    let s = &model.spec;
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        model: SpecRecord {
            variant: s.variant.name().into(),
            input_dim: s.input_dim,
            num_classes: s.num_classes,
            hidden_dim: s.hidden_dim,
            layers: s.layers,
            hidden_graphs: s.hidden_graphs,
            hidden_size: s.hidden_size,
            walk_length: s.walk_length,
            kernel_log1p: s.kernel_log1p,
        },
        params: model
            .store
            .iter()
            .map(|(_, p)| ParamRecord {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Model> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::Checkpoint(format!("format tag `{}` is not `{FORMAT}`", file.format)));
    }
    if file.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {} (expected {VERSION})", file.version)));
    }
    let m = file.model;
    let spec = ModelSpec {
        variant: Variant::parse(&m.variant)?,
        input_dim: m.input_dim,
        num_classes: m.num_classes,
        hidden_dim: m.hidden_dim,
        layers: m.layers,
        hidden_graphs: m.hidden_graphs,
        hidden_size: m.hidden_size,
        walk_length: m.walk_length,
        kernel_log1p: m.kernel_log1p,
    };
    let mut model = Model::new(spec, 0)?;
    let mut expected = model.store.names();
    let mut got: Vec<String> = file.params.iter().map(|p| p.name.clone()).collect();
    expected.sort();
    got.sort();
    if expected != got {
        return Err(Error::Checkpoint("parameter names do not match the model description".into()));
    }
    let tensors = file
        .params
        .into_iter()
        .map(|p| Ok((p.name, Tensor::from_vec(p.rows, p.cols, p.values)?)))
        .collect::<Result<Vec<_>>>()?;
    model.store.load_values(tensors.iter().map(|(n, t)| (n.as_str(), t.clone())))?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    write(path, to_json(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    from_json(&read_to_string(path)?)
}
