use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tgnn::checkpoint::{load_checkpoint, save_checkpoint};
use tgnn::output::HISTORY_HEADER;
use tgnn_core::rwkernel::parse_dot;
use tgnn_core::trainer::{Model, ModelSpec, Variant};

fn tgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgnn")).args(args).output().expect("binary runs")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/TINY")
}

fn small_run(out: &Path, variant: &str) -> Output {
    let dataset = format!("dataset={}", fixture().display());
    let variant = format!("variant={variant}");
    tgnn(&[
        "run",
        "--set",
        &dataset,
        "--set",
        &variant,
        "--set",
        "epochs=3",
        "--set",
        "seeds=1,2",
        "--set",
        "batch=4",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn check_passes_and_exits_zero() {
    let out = tgnn(&["check"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn run_writes_reports_histories_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "tgnn");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [1, 2] {
        let history = std::fs::read_to_string(dir.path().join(format!("history_seed{seed}.csv"))).unwrap();
        let mut lines = history.lines();
        assert_eq!(lines.next(), Some(HISTORY_HEADER));
        assert_eq!(lines.count(), 3);
        let model = load_checkpoint(&dir.path().join(format!("checkpoint_seed{seed}.json"))).unwrap();
        assert_eq!(model.variant(), Variant::Tgnn);
    }
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("mean_test_acc"));
}

#[test]
fn export_writes_one_dot_file_per_hidden_graph() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(small_run(&run, "tgnn").status.success());
    let graphs = dir.path().join("graphs");
    let out = tgnn(&[
        "export",
        "--checkpoint",
        run.join("checkpoint_seed1.json").to_str().unwrap(),
        "--out",
        graphs.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(graphs.join("manifest.csv")).unwrap();
    let rows: Vec<&str> = manifest.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], format!("hidden_{i}.dot"));
        assert_eq!(cols[2], "5");
        let dot = std::fs::read_to_string(graphs.join(cols[0])).unwrap();
        let (n, edges) = parse_dot(&dot).unwrap();
        assert_eq!(n, 5);
        assert_eq!(edges.len().to_string(), cols[3]);
    }
}

#[test]
fn untrained_checkpoint_exports_valid_dot() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelSpec::new(Variant::GkSup, 3, 2), 4).unwrap();
    let path = dir.path().join("untrained.json");
    save_checkpoint(&model, &path).unwrap();
    let graphs = dir.path().join("graphs");
    let out = tgnn(&["export", "--checkpoint", path.to_str().unwrap(), "--out", graphs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..16 {
        let dot = std::fs::read_to_string(graphs.join(format!("hidden_{i}.dot"))).unwrap();
        assert!(dot.starts_with(&format!("graph hidden_{i} {{")));
        let (n, edges) = parse_dot(&dot).unwrap();
        assert_eq!(n, 5);
        // weights start in (0.1, 1), so nothing is pruned at threshold 0
        assert_eq!(edges.len(), 10);
    }
}

#[test]
fn export_refuses_a_variant_without_a_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelSpec::new(Variant::MpSup, 3, 2), 4).unwrap();
    let path = dir.path().join("mp.json");
    save_checkpoint(&model, &path).unwrap();
    let out = tgnn(&["export", "--checkpoint", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        format!("# tiny run\ndataset = {}\nepochs = 50\nseeds = 3\nbatch = 4\nvariant = mp-sup\n", fixture().display()),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = tgnn(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "epochs=2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(out_dir.join("history_seed3.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("variant = mp-sup"));
}

#[test]
fn unknown_key_and_bad_value_exit_two() {
    assert_eq!(tgnn(&["run", "--set", "no_such_key=1"]).status.code(), Some(2));
    assert_eq!(tgnn(&["run", "--set", "tau=-1"]).status.code(), Some(2));
    assert_eq!(tgnn(&["sweep", "--param", "epochs", "--values", "1"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let dataset = format!("dataset={}", fixture().display());
    let out = tgnn(&[
        "sweep",
        "--set",
        &dataset,
        "--set",
        "epochs=2",
        "--set",
        "seeds=1",
        "--set",
        "batch=4",
        "--param",
        "lambda",
        "--values",
        "0,0.5,1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["0", "0.5", "1"]);
}
