use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use heatprof::geometry::DomainSpec;
use serde_json::Value;

fn heatprof(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatprof"));
    cmd.args(args).current_dir(dir).env_remove("HEATPROF_OUT").env_remove("HEATPROF_THREADS").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("config.json"), body).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"domain": "square", "experiments": ["eigen"#);
    let out = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ParseError"));
}

#[test]
fn unknown_gallery_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"domain": "torus", "experiments": ["eigen"]}"#);
    let out = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownGallery"));
    let out = heatprof(&["gallery", "torus"], dir.path(), &[]);
    assert!(!out.status.success());
}

#[test]
fn emitted_spec_loads_as_a_domain_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatprof(&["gallery", "slit-square", "--emit-spec"], dir.path(), &[]);
    assert!(out.status.success());
    let spec: DomainSpec = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec.slits.len(), 1);
    fs::write(dir.path().join("slit.json"), &out.stdout).unwrap();
    write_config(dir.path(), r#"{"domain": "slit.json", "mesh": {"h_max": 0.1}, "experiments": ["eigen"]}"#);
    let run = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let eigen = read_json(&dir.path().join("out/eigen.json"));
    let tip = eigen["data"]["corners"][0]["vertex"].clone();
    assert_eq!(tip, serde_json::json!([0.5, 0.5]));
}

#[test]
fn square_eigenvalue_within_one_percent() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"domain": "square", "mesh": {"h_max": 0.01}, "experiments": ["eigen"], "solver": {"n_eigen": 1}}"#);
    let out = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lambda = read_json(&dir.path().join("out/eigen.json"))["data"]["lambda"][0].as_f64().unwrap();
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((lambda - exact).abs() / exact < 0.01, "{lambda}");
}

#[test]
fn runs_are_bitwise_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"domain": "l-shape", "mesh": {"h_max": 0.08}, "experiments": ["envelope", "green"], "seed": 11,
            "envelope": {"n_pairs": 40, "n_sources": 6, "n_times": 8}}"#,
    );
    let a = heatprof(&["run", "config.json"], dir.path(), &[("HEATPROF_OUT", "a"), ("HEATPROF_THREADS", "1")]);
    let b = heatprof(&["run", "config.json"], dir.path(), &[("HEATPROF_OUT", "b"), ("HEATPROF_THREADS", "4")]);
    assert!(a.status.code().is_some() && a.status.code() == b.status.code());
    let (ta, tb) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(ta.len() > 5);
    assert_eq!(ta.iter().map(|f| &f.0).collect::<Vec<_>>(), tb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in ta.iter().zip(&tb) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
}

#[test]
fn verify_accepts_a_run_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"domain": "square", "mesh": {"h_max": 0.1}, "experiments": ["heat", "green", "eigen"],
            "envelope": {"n_pairs": 30, "n_sources": 4, "n_times": 6}}"#,
    );
    let run = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    let ok = heatprof(&["verify", "out"], dir.path(), &[]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));

    // flip the sign of one interior eigenvector entry
    let nodes = fs::read_to_string(dir.path().join("out/nodes.csv")).unwrap();
    let free = nodes.lines().skip(1).position(|l| l.split(',').nth(3) == Some("0")).unwrap();
    let path = dir.path().join("out/eigen.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[free + 1].split(',').map(String::from).collect();
    cells[3] = format!("-{}", cells[3]);
    lines[free + 1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let bad = heatprof(&["verify", "out"], dir.path(), &[]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL eigen/principal-positive"));
}

#[test]
fn tampered_config_breaks_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"domain": "square", "mesh": {"h_max": 0.1}, "experiments": ["eigen"]}"#);
    assert!(heatprof(&["run", "config.json"], dir.path(), &[]).status.success());
    let path = dir.path().join("out/config.json");
    let mut cfg = read_json(&path);
    cfg["seed"] = serde_json::json!(8);
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = heatprof(&["verify", "out"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL run/config-hash"));
}

#[test]
fn failed_dependencies_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    // too few pairs for an envelope fit
    write_config(
        dir.path(),
        r#"{"domain": "square", "mesh": {"h_max": 0.1}, "experiments": ["envelope"],
            "envelope": {"n_pairs": 2, "n_sources": 1, "n_times": 4}}"#,
    );
    let out = heatprof(&["run", "config.json"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let failures = read_json(&dir.path().join("out/failures.json"));
    let list = failures["failures"].as_array().unwrap();
    assert!(list.iter().any(|f| f["experiment"] == "envelope"));
    assert!(dir.path().join("out/eigen.json").is_file(), "partial results are kept");
}
