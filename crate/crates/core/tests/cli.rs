use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn simulate(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .env_remove("PAULI_OUT_DIR")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_config(name: &str, out: &Path, extra: &[&str]) -> (i32, String) {
    let cfg = configs().join(name);
    let mut args = vec![cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _, err) = simulate(&args);
    (code, err)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn payload_files(manifest: &Value) -> Vec<String> {
    manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect()
}

#[test]
fn quench_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run_config("quench.json", dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let summary = read_json(&dir.path().join("quench_summary.json"));
    let rate = summary["summaries"][0]["quench_rate_per_s"].as_f64().unwrap();
    assert!((rate - 219.52).abs() < 0.01, "{rate}");

    let csv = std::fs::read_to_string(dir.path().join("quench_populations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,p_e_up,p_g_up,p_g_dn");
    assert_eq!(lines.count(), 101);

    let manifest = read_json(&dir.path().join("quench.manifest.json"));
    assert_eq!(manifest["scenario"], "quench");
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["canonical_inputs"].is_object());
    assert!(manifest["numerical_controls"].is_object());
    for key in ["version", "modules", "files", "warnings", "wall_time_s"] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
    for f in payload_files(&manifest) {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn zeeman_logspace_scan() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run_config("zeeman_scan.json", dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("zeeman_noflip.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 200);
    assert!(rows[0].starts_with("0.01,"));
    assert!(rows[199].starts_with("100,"));
    let summary = read_json(&dir.path().join("zeeman_summary.json"));
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 200);
    assert_eq!(summary["summaries"][0]["scan_parameter"], "x");
}

#[test]
fn outputs_are_deterministic_and_independent_of_parallelism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run_config("rates_1d_scan.json", a.path(), &[]).0, 0);
    assert_eq!(run_config("rates_1d_scan.json", b.path(), &[]).0, 0);
    assert_eq!(run_config("rates_1d_scan.json", c.path(), &["--parallel", "4"]).0, 0);
    let manifest = read_json(&a.path().join("rates_1d.manifest.json"));
    let files = payload_files(&manifest);
    assert!(!files.is_empty());
    for f in files {
        let x = std::fs::read(a.path().join(&f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(&f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.path().join(&f)).unwrap(), "{f} with --parallel");
    }
}

#[test]
fn json_format_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run_config("rates_3d_laser.json", dir.path(), &[]);
    assert!(code == 0 || code == 1, "{err}");
    let manifest_path = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .unwrap();
    let manifest = read_json(&manifest_path);
    let files = payload_files(&manifest);
    assert_eq!(files.len(), 1);
    let payload = read_json(&dir.path().join(&files[0]));
    assert_eq!(payload["scenario"], "rates");
    let rates = &payload["tables"]["rates"];
    let width = rates["columns"].as_array().unwrap().len();
    for row in rates["rows"].as_array().unwrap() {
        assert_eq!(row.as_array().unwrap().len(), width);
    }
    assert!(payload["warnings"].is_array());
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn config_errors_exit_2_and_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "schema_version": 1,
  "scenario": "quench",
  "parameters": { "omega_dr": 4e6, "delta_dr": "290 furlongs", "gamma_1p": "29 MHz", "eta": 0.28, "eta_dr": 0.09, "typo": 1 },
  "output": { "format": "csv", "path": "q" }
}"#,
    );
    let out = dir.path().join("out");
    let (code, _, err) = simulate(&[cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("omega_dr"), "{err}");
    assert!(err.contains("unit missing"), "{err}");
    assert!(err.contains("delta_dr"), "{err}");
    assert!(err.contains("typo"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_config_and_bad_schema_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = simulate(&[dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code, 2);
    let cfg = write_config(dir.path(), r#"{ "schema_version": 7, "scenario": "rates", "parameters": {}, "output": { "format": "csv", "path": "r" } }"#);
    let (code, _, err) = simulate(&[cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("schema_version"), "{err}");
}

#[test]
fn warnings_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "schema_version": 1,
  "scenario": "rates",
  "parameters": { "eta": 0.8 },
  "output": { "format": "csv", "path": "r" }
}"#,
    );
    let (code, _, err) = simulate(&[cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("warning"), "{err}");
    let manifest = read_json(&dir.path().join("r.manifest.json"));
    assert!(!manifest["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("quench.json");
    let status = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .arg(&cfg)
        .env("PAULI_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(dir.path().join("quench.manifest.json").exists());
}
