//! The `simulate` command line.
//!
//! ```text
//! simulate <config-path> [--out DIR] [--parallel N] [--verbose]
//! ```
//!
//! Exit codes: `0` success, `1` finished with warnings, `2` error.

pub mod config;
pub mod manifest;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rayon::prelude::*;

pub use config::{parse_config, parse_config_in, Params, Scenario, ScenarioConfig};
pub use manifest::{FileEntry, RunOutput};
pub use run::{run_point, PointResult, Table};

use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_WARN: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "PAULI_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "simulate", version, about = "Run a Pauli-blocking scenario from a JSON config")]
pub struct Args {
    /// Scenario config (JSON).
    pub config: PathBuf,
    /// Output directory [default: $PAULI_OUT_DIR, else ./out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for scan points; scans run serially by default.
    #[arg(long, value_name = "N")]
    pub parallel: Option<usize>,
    /// Progress and summaries on stderr.
    #[arg(long)]
    pub verbose: bool,
}

impl Args {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn point_label(cfg: &ScenarioConfig, point: Option<f64>) -> String {
    match (&cfg.scan, point) {
        (Some(s), Some(v)) => match &s.unit {
            Some(u) => format!("{}={v} {u}", s.parameter),
            None => format!("{}={v}", s.parameter),
        },
        _ => String::new(),
    }
}

fn scan_column(cfg: &ScenarioConfig) -> Option<String> {
    let s = cfg.scan.as_ref()?;
    Some(match &s.unit {
        Some(u) => format!("{} [{u}]", s.parameter),
        None => s.parameter.clone(),
    })
}

/// Evaluates every grid point and merges the results in grid order.
pub fn execute(cfg: &ScenarioConfig, parallel: Option<usize>, verbose: bool) -> Result<(RunOutput, Vec<Params>)> {
    let points = cfg.points();
    let params: Vec<Params> = points.iter().map(|&p| cfg.params_at(p)).collect::<Result<_>>()?;
    let eval = |(i, p): (usize, &Params)| -> Result<PointResult> {
        let r = run_point(p);
        if verbose {
            let label = point_label(cfg, points[i]);
            match &r {
                Ok(res) => eprintln!("[{}/{}] {label} {}", i + 1, points.len(), manifest::describe(&res.summary)),
                Err(e) => eprintln!("[{}/{}] {label} failed: {e}", i + 1, points.len()),
            }
        }
        r
    };
    let results: Vec<PointResult> = match parallel {
        Some(n) if n > 1 && points.len() > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(vec![format!("--parallel {n}: {e}")]))?;
            pool.install(|| params.par_iter().enumerate().map(eval).collect::<Result<_>>())?
        }
        _ => params.iter().enumerate().map(eval).collect::<Result<_>>()?,
    };

    let column = scan_column(cfg);
    let mut out = RunOutput::default();
    for (point, res) in points.iter().zip(results) {
        let label = point_label(cfg, *point);
        for w in res.warnings {
            out.warnings.push(if label.is_empty() { w } else { format!("[{label}] {w}") });
        }
        let mut summary = res.summary;
        if let (Some(s), Some(v)) = (&cfg.scan, point) {
            summary.insert("scan_parameter".into(), s.parameter.clone().into());
            summary.insert("scan_value".into(), serde_json::json!(v));
        }
        out.summaries.push(summary);
        for mut t in res.tables {
            if let (Some(col), Some(v)) = (&column, point) {
                if !t.columns.contains(col) {
                    t.columns.insert(0, col.clone());
                    for row in &mut t.rows {
                        row.insert(0, *v);
                    }
                }
            }
            match out.tables.iter_mut().find(|x| x.name == t.name) {
                Some(existing) if existing.columns == t.columns => existing.rows.extend(t.rows),
                Some(_) => {
                    return Err(Error::Config(vec![format!(
                        "table `{}` changes its columns across the scan (scan a parameter that keeps the basis fixed)",
                        t.name
                    )]))
                }
                None => out.tables.push(t),
            }
        }
    }
    Ok((out, params))
}

/// Runs one config end to end and writes the results under `out_dir`.
/// Returns the manifest path and the warnings.
pub fn simulate(config_path: &Path, out_dir: &Path, parallel: Option<usize>, verbose: bool) -> Result<(PathBuf, Vec<String>)> {
    let start = Instant::now();
    let bytes = std::fs::read(config_path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config(vec![format!("config is not UTF-8: {e}")]))?;
    let base = config_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let cfg = parse_config_in(&text, base)?;
    let (out, params) = execute(&cfg, parallel, verbose)?;
    std::fs::create_dir_all(out_dir)?;
    let files = manifest::write_payload(&cfg, &out, out_dir)?;
    let canonical_inputs = params.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?;
    let numerical_controls = params.iter().map(run::numerical_controls).collect();
    let path = manifest::write_manifest(
        manifest::ManifestInput {
            config_bytes: &bytes,
            config_path,
            cfg: &cfg,
            canonical_inputs,
            numerical_controls,
            files,
            warnings: &out.warnings,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        out_dir,
    )?;
    Ok((path, out.warnings))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(args: Args) -> i32 {
    let out_dir = args.out_dir();
    match simulate(&args.config, &out_dir, args.parallel, args.verbose) {
        Ok((manifest, warnings)) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", manifest.display());
            if warnings.is_empty() {
                EXIT_OK
            } else {
                EXIT_WARN
            }
        }
        Err(Error::Config(errs)) => {
            eprintln!("error: invalid config {}", args.config.display());
            for e in errs {
                eprintln!("  {e}");
            }
            EXIT_ERROR
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
