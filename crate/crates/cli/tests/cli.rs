use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aztec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aztec")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.split_whitespace().next() == Some(key)).unwrap_or_else(|| panic!("no {key} in\n{text}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn spectral_reports_two_periodic_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "two_periodic.cfg", "a = 0.5\nN = 1\n");
    let o = aztec(&["spectral", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!((value(&text, "tau") - 1.0).abs() < 1e-12);
    assert!((value(&text, "sigma2_closed_form") - 2.0 / 6.25).abs() < 1e-12);
    // Three roots for ell = 2, the first at zero.
    assert_eq!(value(&text, "root_0"), 0.0);
    assert!(text.contains("root_2"));
}

#[test]
fn oracle_partition_of_uniform_size_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "uniform_n4.cfg", "alphas = 1\nbetas = 1\nN = 2\n");
    let o = aztec(&["oracle", "--config", cfg.to_str().unwrap(), "--partition"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let z: f64 = text.lines().find_map(|l| l.strip_prefix("Z = ")).unwrap().parse().unwrap();
    assert!((z - 1024.0).abs() < 1e-9, "{text}");
}

#[test]
fn missing_config_exits_with_validation_code() {
    let o = aztec(&["spectral", "--config", "/nonexistent/weights.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/weights.cfg"));
}

#[test]
fn usage_errors_print_the_grammar() {
    let o = aztec(&["shuffle"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alphas"));
}

#[test]
fn product_constraint_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.cfg", "alphas = 1, 2\nbetas = 1, 1\n");
    let o = aztec(&["spectral", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unattainable_tolerance_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "two_periodic.cfg", "a = 0.5\nN = 1\n");
    let o = aztec(&["kernel", "--config", cfg.to_str().unwrap(), "--sites", "0:0,1:2", "--tol", "1e-300"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn failed_convergence_rows_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "small.cfg", "a = 0.5\nN = 2\nseed = 3\n");
    let o = aztec(&["converge", "--config", cfg.to_str().unwrap(), "--mode", "process", "--count", "40", "--ks", "1e-9"]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(stdout(&o).contains("FAILED"));
}

#[test]
fn samples_are_reproducible_across_thread_counts_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "w.cfg", "alphas = 2, 1/2\nbetas = 1, 1\nN = 2\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = aztec(&[
            "sample",
            "--config",
            cfg.to_str().unwrap(),
            "--count",
            "16",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{o:?}");
    }
    let covers = std::fs::read_to_string(a.join("covers.jsonl")).unwrap();
    assert_eq!(covers, std::fs::read_to_string(b.join("covers.jsonl")).unwrap());
    assert_eq!(covers.lines().count(), 16);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("covers.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "sample");
    assert_eq!(manifest["seeds"][0], 9);
    assert_eq!(manifest["threads"], 1);
    assert!(manifest["rng"].as_str().unwrap().contains("ChaCha8"));
    assert_eq!(manifest["config"]["alphas"][0], 2.0);
    let first: serde_json::Value = serde_json::from_str(covers.lines().next().unwrap()).unwrap();
    assert_eq!(first["size"], 8);
    assert_eq!(first["kinds"].as_str().unwrap().len(), 8 * 9);
}

#[test]
fn rescaled_kernel_table_has_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "w.cfg", "a = 0.7\nN = 16\n");
    let o = aztec(&["kernel", "--config", cfg.to_str().unwrap(), "--points", "1:-1:0,2:0.4:1", "--tol", "1e-6"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("t1,mu1,j1,t2,mu2,j2,re,im,quad_error,limit,nu2"));
}

#[test]
fn gue_table_and_sample_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "w.cfg", "a = 0.5\n");
    let out = dir.path().join("out");
    let o = aztec(&[
        "gue",
        "--points",
        "1:0,2:-0.5",
        "--sample",
        "5",
        "--levels",
        "3",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let table = std::fs::read_to_string(out.join("gue_kernel.csv")).unwrap();
    let diag: f64 = table.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((diag - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
    let dump = std::fs::read_to_string(out.join("corners.jsonl")).unwrap();
    assert_eq!(dump.lines().count(), 5);
    let s: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert_eq!(s["levels"][2].as_array().unwrap().len(), 3);
    assert!(out.join("corners.jsonl.manifest.json").exists());
}
