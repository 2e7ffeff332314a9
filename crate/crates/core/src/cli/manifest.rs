//! Output files and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::config::{Format, ScenarioConfig};
use super::run::Table;
use crate::Result;

/// Module versions recorded in every manifest.
pub const MODULES: [&str; 5] = ["recoil", "rates", "zeeman", "master_eq", "photon"];

/// `{}` for magnitudes in `[1e-4, 1e15)` and zero, scientific otherwise.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn to_csv(table: &Table) -> String {
    let mut s = table.columns.join(",");
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Aggregated results of all grid points.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    /// One summary per grid point, in grid order.
    pub summaries: Vec<Map<String, Value>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct JsonPayload<'a> {
    scenario: &'a str,
    tables: Map<String, Value>,
    summaries: &'a [Map<String, Value>],
    warnings: &'a [String],
}

fn write_file(dir: &Path, name: String, body: &[u8], files: &mut Vec<FileEntry>) -> Result<PathBuf> {
    let path = dir.join(&name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, body)?;
    files.push(FileEntry { path: name, sha256: sha256_hex(body) });
    Ok(path)
}

/// Writes the result files and returns their entries.
pub fn write_payload(cfg: &ScenarioConfig, out: &RunOutput, dir: &Path) -> Result<Vec<FileEntry>> {
    let stem = cfg.output.path.to_string_lossy().into_owned();
    let mut files = Vec::new();
    match cfg.output.format {
        Format::Csv => {
            for t in &out.tables {
                write_file(dir, format!("{stem}_{}.csv", t.name), to_csv(t).as_bytes(), &mut files)?;
            }
            let summary = json!({ "summaries": out.summaries, "warnings": out.warnings });
            let mut body = serde_json::to_vec_pretty(&summary)?;
            body.push(b'\n');
            write_file(dir, format!("{stem}_summary.json"), &body, &mut files)?;
        }
        Format::Json => {
            let tables = out
                .tables
                .iter()
                .map(|t| (t.name.clone(), json!({ "columns": t.columns, "rows": t.rows })))
                .collect();
            let payload = JsonPayload {
                scenario: cfg.scenario.name(),
                tables,
                summaries: &out.summaries,
                warnings: &out.warnings,
            };
            let mut body = serde_json::to_vec_pretty(&payload)?;
            body.push(b'\n');
            write_file(dir, format!("{stem}.json"), &body, &mut files)?;
        }
    }
    Ok(files)
}

pub struct ManifestInput<'a> {
    pub config_bytes: &'a [u8],
    pub config_path: &'a Path,
    pub cfg: &'a ScenarioConfig,
    pub canonical_inputs: Vec<Value>,
    pub numerical_controls: Vec<Value>,
    pub files: Vec<FileEntry>,
    pub warnings: &'a [String],
    pub wall_time_s: f64,
}

pub fn write_manifest(m: ManifestInput, dir: &Path) -> Result<PathBuf> {
    let version = env!("CARGO_PKG_VERSION");
    let modules: Map<String, Value> = MODULES.iter().map(|n| (n.to_string(), json!(version))).collect();
    let collapse = |v: Vec<Value>| if v.len() == 1 { v.into_iter().next().unwrap() } else { Value::Array(v) };
    let manifest = json!({
        "config": m.config_path.to_string_lossy(),
        "config_sha256": sha256_hex(m.config_bytes),
        "version": version,
        "modules": modules,
        "scenario": m.cfg.scenario.name(),
        "schema_version": m.cfg.schema_version,
        "scan": m.cfg.scan,
        "canonical_inputs": collapse(m.canonical_inputs),
        "numerical_controls": collapse(m.numerical_controls),
        "files": m.files,
        "warnings": m.warnings,
        "wall_time_s": m.wall_time_s,
    });
    let path = dir.join(format!("{}.manifest.json", m.cfg.output.path.to_string_lossy()));
    let mut body = serde_json::to_vec_pretty(&manifest)?;
    body.push(b'\n');
    std::fs::write(&path, body)?;
    Ok(path)
}

/// Human-readable one-line description of a summary value.
pub fn describe(summary: &Map<String, Value>) -> String {
    let mut s = String::new();
    for (k, v) in summary {
        if v.is_object() || v.is_array() {
            continue;
        }
        let text = match v.as_f64() {
            Some(x) => format_number(x),
            None => v.to_string(),
        };
        let _ = write!(s, "{}{k}={text}", if s.is_empty() { "" } else { " " });
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(219.52), "219.52");
        assert_eq!(format_number(1e-5), "1e-5");
        assert_eq!(format_number(-3.5e-7), "-3.5e-7");
        assert_eq!(format_number(2e15), "2e15");
        assert_eq!(format_number(1e-4), "0.0001");
    }

    #[test]
    fn csv_layout() {
        let t = Table { name: "x".into(), columns: vec!["a".into(), "b".into()], rows: vec![vec![1.0, 2e-9]] };
        assert_eq!(to_csv(&t), "a,b\n1,2e-9\n");
    }
}
