//! TU benchmark format: `DS_A.txt`, `DS_graph_indicator.txt`,
//! `DS_graph_labels.txt` and optional `DS_node_labels.txt` /
//! `DS_node_attributes.txt`, all 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tgnn_core::graph::degree_features;
use tgnn_core::{Dataset, Graph, Tensor};

use crate::error::{read_to_string, write, Error, Result};

/// Resolves the `DS` prefix: the directory name if `<dir>/<name>_A.txt`
/// exists, otherwise the unique `*_A.txt` file in the directory.
fn dataset_prefix(dir: &Path) -> Result<String> {
    if let Some(name) = dir.file_name().and_then(|n| n.to_str()) {
        if dir.join(format!("{name}_A.txt")).is_file() {
            return Ok(name.to_string());
        }
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<String> = entries
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix("_A.txt").map(str::to_string))
        .collect();
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::MissingFile(dir.join("DS_A.txt"))),
        _ => Err(Error::Inconsistent(format!("several *_A.txt files in {}: {found:?}", dir.display()))),
    }
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_field<T: FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse `{}`", field.trim()),
    })
}

fn parse_fields<T: FromStr>(path: &Path, line: usize, text: &str) -> Result<Vec<T>> {
    text.split(',').map(|f| parse_field(path, line, f)).collect()
}

fn optional(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

fn required(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

/// Loads a TU dataset directory. Node labels become one-hot columns (in
/// sorted label order) followed by any node attributes; with neither, nodes
/// get one-hot degree features capped at `max_degree`. Graph labels are
/// remapped to `0..C` in sorted order, self-loops are dropped and repeated
/// pairs collapse to one undirected edge.
pub fn load_tu_dataset(dir: &Path, max_degree: usize) -> Result<Dataset> {
    let prefix = dataset_prefix(dir)?;
    let file = |suffix: &str| dir.join(format!("{prefix}_{suffix}.txt"));
    let a_path = required(file("A"))?;
    let ind_path = required(file("graph_indicator"))?;
    let lab_path = required(file("graph_labels"))?;

    let indicator: Vec<i64> =
        lines(&ind_path)?.iter().map(|(n, l)| parse_field(&ind_path, *n, l)).collect::<Result<_>>()?;
    let num_nodes = indicator.len();
    let graph_ids: BTreeSet<i64> = indicator.iter().copied().collect();
    let graph_index: BTreeMap<i64, usize> = graph_ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut local = vec![0usize; num_nodes];
    let mut sizes = vec![0usize; graph_ids.len()];
    for (node, gid) in indicator.iter().enumerate() {
        let g = graph_index[gid];
        local[node] = sizes[g];
        sizes[g] += 1;
    }

    let raw_labels: Vec<i64> =
        lines(&lab_path)?.iter().map(|(n, l)| parse_field(&lab_path, *n, l)).collect::<Result<_>>()?;
    if raw_labels.len() != graph_ids.len() {
        return Err(Error::Inconsistent(format!(
            "{} graph labels but {} graphs in the indicator",
            raw_labels.len(),
            graph_ids.len()
        )));
    }
    let label_values: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let label_index: BTreeMap<i64, usize> = label_values.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph_ids.len()];
    for (n, l) in lines(&a_path)? {
        let pair: Vec<usize> = parse_fields(&a_path, n, &l)?;
        let [u, v] = pair[..] else {
            return Err(Error::Parse { path: a_path.clone(), line: n, message: "expected `u, v`".into() });
        };
        if u == 0 || v == 0 || u > num_nodes || v > num_nodes {
            return Err(Error::Inconsistent(format!("edge ({u}, {v}) outside 1..={num_nodes} at line {n}")));
        }
        let (u, v) = (u - 1, v - 1);
        if indicator[u] != indicator[v] {
            return Err(Error::Inconsistent(format!("edge ({}, {}) joins two graphs", u + 1, v + 1)));
        }
        edges[graph_index[&indicator[u]]].push((local[u], local[v]));
    }

    let mut columns: Vec<Vec<Vec<f64>>> = Vec::new();
    if let Some(path) = optional(file("node_labels")) {
        let values: Vec<i64> = lines(&path)?
            .iter()
            .map(|(n, l)| parse_field(&path, *n, l.split(',').next().unwrap_or("")))
            .collect::<Result<_>>()?;
        check_node_count(&path, values.len(), num_nodes)?;
        let distinct: BTreeMap<i64, usize> =
            values.iter().copied().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        columns.push(
            values
                .iter()
                .map(|v| {
                    let mut row = vec![0.0; distinct.len()];
                    row[distinct[v]] = 1.0;
                    row
                })
                .collect(),
        );
    }
    if let Some(path) = optional(file("node_attributes")) {
        let rows: Vec<Vec<f64>> =
            lines(&path)?.iter().map(|(n, l)| parse_fields(&path, *n, l)).collect::<Result<_>>()?;
        check_node_count(&path, rows.len(), num_nodes)?;
        if let Some(bad) = rows.iter().position(|r| r.len() != rows[0].len()) {
            return Err(Error::Inconsistent(format!("node {} has {} attributes, node 1 has {}", bad + 1, rows[bad].len(), rows[0].len())));
        }
        columns.push(rows);
    }
    let width: usize = columns.iter().map(|c| c.first().map_or(0, Vec::len)).sum();

    let mut features: Vec<Vec<f64>> = vec![Vec::new(); graph_ids.len()];
    for node in 0..num_nodes {
        let row = &mut features[graph_index[&indicator[node]]];
        for c in &columns {
            row.extend_from_slice(&c[node]);
        }
    }
    let mut graphs = Vec::with_capacity(graph_ids.len());
    for (g, edge_list) in edges.into_iter().enumerate() {
        let n = sizes[g];
        let label = Some(label_index[&raw_labels[g]]);
        let graph = if width == 0 {
            degree_features(&Graph::from_edges_lossy(n, edge_list, Tensor::zeros(n, 1), label)?, max_degree)?
        } else {
            let feats = Tensor::from_vec(n, width, std::mem::take(&mut features[g]))?;
            Graph::from_edges_lossy(n, edge_list, feats, label)?
        };
        graphs.push(graph);
    }
    Ok(Dataset::new(prefix, graphs)?)
}

fn check_node_count(path: &Path, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Inconsistent(format!("{} has {got} rows for {expected} nodes", path.display())));
    }
    Ok(())
}

/// Writes `dataset` as `<dir>/<name>_*.txt`, with features as node
/// attributes and each undirected edge listed in both directions.
pub fn write_tu_dataset(dataset: &Dataset, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut a, mut ind, mut labels, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        let label = graph.label().ok_or_else(|| Error::Inconsistent(format!("graph {g} has no label")))?;
        writeln!(labels, "{label}").expect("string write");
        for v in 0..graph.num_nodes() {
            writeln!(ind, "{}", g + 1).expect("string write");
            let row: Vec<String> = graph.features().row_slice(v).iter().map(f64::to_string).collect();
            writeln!(attrs, "{}", row.join(", ")).expect("string write");
        }
        for &(u, v) in graph.edges() {
            writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).expect("string write");
            writeln!(a, "{}, {}", offset + v + 1, offset + u + 1).expect("string write");
        }
        offset += graph.num_nodes();
    }
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));
    write(&file("A"), a)?;
    write(&file("graph_indicator"), ind)?;
    write(&file("graph_labels"), labels)?;
    write(&file("node_attributes"), attrs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, files: &[(&str, &str)]) {
        for (suffix, text) in files {
            std::fs::write(dir.join(format!("T_{suffix}.txt")), text).unwrap();
        }
    }

    #[test]
    fn triangle_and_edge() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[
                ("A", "1, 2\n2, 3\n3, 1\n4, 5\n5, 4\n2, 1\n"),
                ("graph_indicator", "1\n1\n1\n2\n2\n"),
                ("graph_labels", "1\n2\n"),
            ],
        );
        let d = load_tu_dataset(tmp.path(), 4).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.labels(), vec![Some(0), Some(1)]);
        assert_eq!(d.graphs[0].num_edges(), 3);
        assert_eq!(d.graphs[1].edges(), &[(0, 1)]);
        assert_eq!(d.feature_dim(), 5);
        assert_eq!(d.graphs[0].features().row_slice(0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn node_labels_become_one_hot() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[
                ("A", "1, 2\n"),
                ("graph_indicator", "1\n1\n2\n"),
                ("graph_labels", "-1\n1\n"),
                ("node_labels", "3\n1\n2\n"),
                ("node_attributes", "0.5, 1\n-2, 0\n7, 7\n"),
            ],
        );
        let d = load_tu_dataset(tmp.path(), 64).unwrap();
        assert_eq!(d.feature_dim(), 5);
        assert_eq!(d.graphs[0].features().row_slice(0), &[0.0, 0.0, 1.0, 0.5, 1.0]);
        assert_eq!(d.graphs[0].features().row_slice(1), &[1.0, 0.0, 0.0, -2.0, 0.0]);
        assert_eq!(d.graphs[1].features().row_slice(0), &[0.0, 1.0, 0.0, 7.0, 7.0]);
    }

    #[test]
    fn errors() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), &[("A", "1, 2\n"), ("graph_indicator", "1\n1\n")]);
        assert!(matches!(load_tu_dataset(tmp.path(), 4), Err(Error::MissingFile(_))));
        write_files(tmp.path(), &[("graph_labels", "0\n1\n")]);
        assert!(matches!(load_tu_dataset(tmp.path(), 4), Err(Error::Inconsistent(_))));
        write_files(tmp.path(), &[("graph_labels", "0\n"), ("node_labels", "1\n")]);
        assert!(matches!(load_tu_dataset(tmp.path(), 4), Err(Error::Inconsistent(_))));
        write_files(tmp.path(), &[("A", "1, x\n"), ("node_labels", "1\n1\n")]);
        assert!(matches!(load_tu_dataset(tmp.path(), 4), Err(Error::Parse { line: 1, .. })));
        write_files(tmp.path(), &[("A", "1, 3\n")]);
        assert!(matches!(load_tu_dataset(tmp.path(), 4), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn self_loops_are_dropped() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), &[("A", "1, 1\n1, 2\n"), ("graph_indicator", "1\n1\n"), ("graph_labels", "0\n")]);
        let d = load_tu_dataset(tmp.path(), 4).unwrap();
        assert_eq!(d.graphs[0].edges(), &[(0, 1)]);
    }
}
