//! End-to-end tests of the binary: exit codes, artifact caching, output
//! determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pathweave");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("binary starts")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_triangle(dir: &Path) -> String {
    let path = dir.join("triangle.edgelist");
    fs::write(&path, "a b\nb c\nc a\n").unwrap();
    path.display().to_string()
}

/// A complete small config over the given topology file.
fn write_config(dir: &Path, topology: &str) -> String {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "topology": {{"path": "{topology}"}},
  "k": 2,
  "tm": {{"count": 12, "seed": 7, "volume": 6.0}},
  "train": {{"epochs": 2, "learning_rate": 0.01, "seed": 5}},
  "scenarios": {{"count": 4, "seed": 9}},
  "regimes": ["weave", "source_reroute", "no_reaction"]
}}
"#
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn state_calculator_prints_the_footprint() {
    let out = run(&[
        "state", "--nodes", "88", "--degree", "4", "--paths", "64", "--segments", "8",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rule entries: 5824"), "got: {text}");
    assert!(text.contains("rule bytes: 46592"), "got: {text}");
    let zero = run(&["state", "--nodes", "1", "--degree", "1", "--paths", "1", "--segments", "1"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn topo_reports_shape_and_rejects_degenerate_graphs() {
    let dir = TempDir::new().unwrap();
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let out = run(&["topo", "--config", &cfg]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("3 nodes, 3 links"), "got: {text}");
    assert!(text.contains("(0 removed)"), "got: {text}");

    // A path graph prunes away entirely: data error.
    let chain = dir.path().join("chain.edgelist");
    fs::write(&chain, "a b\nb c\n").unwrap();
    let cfg2 = write_config(dir.path(), &chain.display().to_string());
    let out2 = run(&["topo", "--config", &cfg2]);
    assert_eq!(out2.status.code(), Some(3), "stderr: {}", stderr(&out2));
}

#[test]
fn paths_reports_triangle_entries_and_honors_overrides() {
    let dir = TempDir::new().unwrap();
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let out_dir = dir.path().join("out");
    let out_flag = out_dir.display().to_string();
    let out = run(&["paths", "--config", &cfg, "--out", &out_flag]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("routing entries: 6 (12 paths)"), "got: {text}");
    assert!(out_dir.join("pathset.json").exists());

    // Overriding k invalidates the cached stage and rebuilds.
    let narrowed = run(&["paths", "--config", &cfg, "--out", &out_flag, "--k", "1"]);
    assert!(narrowed.status.success());
    assert!(
        stdout(&narrowed).contains("routing entries: 6 (6 paths)"),
        "got: {}",
        stdout(&narrowed)
    );
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    // Missing config file.
    let missing = run(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));

    // Demand series too short for training: validation error.
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let out_flag = dir.path().join("out").display().to_string();
    let short = run(&[
        "run", "--config", &cfg, "--out", &out_flag, "--tm-count", "2",
    ]);
    assert_eq!(short.status.code(), Some(2), "stderr: {}", stderr(&short));

    // Unknown regime name: config parse error.
    let bad = dir.path().join("bad.json");
    let text = fs::read_to_string(&cfg).unwrap().replace("weave", "sorcery");
    fs::write(&bad, text).unwrap();
    let parse = run(&["run", "--config", &bad.display().to_string(), "--out", &out_flag]);
    assert_eq!(parse.status.code(), Some(2), "stderr: {}", stderr(&parse));
}

#[test]
fn missing_topology_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "/nonexistent/topology.edgelist");
    let out = run(&["topo", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn run_is_deterministic_and_caching_never_changes_results() {
    let dir = TempDir::new().unwrap();
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let cold_a = dir.path().join("a");
    let cold_b = dir.path().join("b");

    let first = run(&["run", "--config", &cfg, "--out", &cold_a.display().to_string()]);
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    for artifact in ["pathset.json", "tms.json", "model.ckpt", "results.csv", "summary.json"] {
        assert!(cold_a.join(artifact).exists(), "missing {artifact}");
    }
    let results_a = fs::read(cold_a.join("results.csv")).unwrap();
    let summary_a = fs::read(cold_a.join("summary.json")).unwrap();

    // Same seeds, fresh directory: byte-identical outputs.
    let second = run(&["run", "--config", &cfg, "--out", &cold_b.display().to_string()]);
    assert!(second.status.success(), "stderr: {}", stderr(&second));
    assert_eq!(results_a, fs::read(cold_b.join("results.csv")).unwrap());
    assert_eq!(summary_a, fs::read(cold_b.join("summary.json")).unwrap());

    // Warm rerun reuses cached stages and reproduces the same bytes.
    let warm = run(&["run", "--config", &cfg, "--out", &cold_a.display().to_string()]);
    assert!(warm.status.success(), "stderr: {}", stderr(&warm));
    assert_eq!(results_a, fs::read(cold_a.join("results.csv")).unwrap());
    assert_eq!(summary_a, fs::read(cold_a.join("summary.json")).unwrap());

    // The warm run really reads the cache: corrupting a cached artifact
    // while keeping its fingerprint turns the rerun into a data error.
    fs::write(cold_a.join("tms.json"), "not json").unwrap();
    let corrupted = run(&["run", "--config", &cfg, "--out", &cold_a.display().to_string()]);
    assert_eq!(corrupted.status.code(), Some(3), "stderr: {}", stderr(&corrupted));
}

#[test]
fn results_csv_has_the_expected_shape() {
    let dir = TempDir::new().unwrap();
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", &cfg, "--out", &out_dir.display().to_string()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "topology,regime,tm_index,scenario_id,mlu,normalized_mlu,loss,delay"
    );
    // 4 scenarios x 3 regimes.
    assert_eq!(lines.count(), 12);
    // Numeric columns hold finite nonnegative values.
    for line in csv.lines().skip(1) {
        for field in line.split(',').skip(4) {
            let v: f64 = field.parse().unwrap();
            assert!(v.is_finite() && v >= 0.0, "bad value {v} in {line}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"], 4);
    assert_eq!(summary["regimes"].as_array().unwrap().len(), 3);
    assert!(summary["train"]["final_mlu"].as_f64().unwrap().is_finite());
}

#[test]
fn noise_reports_negligible_change_for_tiny_alpha() {
    let dir = TempDir::new().unwrap();
    let topo = write_triangle(dir.path());
    let cfg = write_config(dir.path(), &topo);
    let out_flag = dir.path().join("out").display().to_string();
    let out = run(&[
        "noise", "--config", &cfg, "--out", &out_flag, "--alphas", "1e-9",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let row = &rows.as_array().unwrap()[0];
    assert!(row["mean_change"].as_f64().unwrap().abs() < 1e-6);
    assert!(row["p99_change"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(row["samples"], 3);

    let bad = run(&["noise", "--config", &cfg, "--out", &out_flag, "--alphas", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}
