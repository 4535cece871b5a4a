//! Hidden-graph DOT export from a checkpoint.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tgnn_core::rwkernel::export_hidden_graphs;

use crate::checkpoint::load_checkpoint;
use crate::error::{write, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub index: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
}

pub const MANIFEST: &str = "manifest.csv";

/// Writes `hidden_{i}.dot` for every hidden graph of the checkpoint's first
/// kernel encoder plus `manifest.csv`. Edges with weight `<= threshold` are
/// left out.
pub fn export_checkpoint(checkpoint: &Path, out: &Path, threshold: f64) -> Result<Vec<ManifestEntry>> {
    let model = load_checkpoint(checkpoint)?;
    let kernel = model
        .kernel()
        .ok_or_else(|| Error::Checkpoint(format!("variant {} has no kernel encoder to export", model.variant())))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = String::from("file,index,num_nodes,num_edges\n");
    let mut entries = Vec::new();
    for g in export_hidden_graphs(&model.store, kernel, threshold)? {
        let name = format!("hidden_{}.dot", g.index);
        write(&out.join(&name), &g.dot)?;
        writeln!(manifest, "{name},{},{},{}", g.index, g.num_nodes, g.edges.len()).expect("string write");
        entries.push(ManifestEntry { file: out.join(name), index: g.index, num_nodes: g.num_nodes, num_edges: g.edges.len() });
    }
    write(&out.join(MANIFEST), manifest)?;
    Ok(entries)
}
