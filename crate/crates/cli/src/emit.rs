//! Result emission: CSV rows under the fixed column schema, JSON documents,
//! whitespace-separated plot-data series, and the run record sidecar.
//!
//! Everything written here is a pure function of the results, so identical
//! results give byte-identical files.  Timestamps live only in the run
//! record, which is excluded from that guarantee.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::runner::{CliError, CsvRow, ResultsDoc};

/// The exact column order of every results CSV.
pub const CSV_HEADER: &str = "experiment,task_id,n,m,trials,err_S_mean,err_S_se,err_Sp_mean,err_Sp_se,le,log_le,verdict,seed";

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_text(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.experiment,
            fmt_opt(r.task_id),
            fmt_opt(r.n),
            fmt_opt(r.m),
            r.trials,
            fmt_opt_f64(r.err_s_mean),
            fmt_opt_f64(r.err_s_se),
            fmt_opt_f64(r.err_sp_mean),
            fmt_opt_f64(r.err_sp_se),
            fmt_opt_f64(r.le),
            fmt_opt_f64(r.log_le),
            fmt_opt(r.verdict.clone()),
            r.seed,
        ));
    }
    out
}

fn io_err(e: std::io::Error, path: &Path) -> CliError {
    CliError::Run(format!("{}: {e}", path.display()))
}

pub fn emit_csv(rows: &[CsvRow], path: &Path) -> Result<(), CliError> {
    fs::write(path, csv_text(rows)).map_err(|e| io_err(e, path))
}

pub fn emit_json(doc: &ResultsDoc, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Run(format!("serialize results: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| io_err(e, path))
}

/// One file per series, two whitespace-separated columns under a one-line
/// header.
pub fn emit_plotdata(doc: &ResultsDoc, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (series, header, points) in doc.plot_series() {
        let path = dir.join(format!("{stem}_{series}.dat"));
        let mut out = String::with_capacity(points.len() * 24 + 16);
        out.push_str(&format!("# {header}\n"));
        for (x, y) in points {
            out.push_str(&format!("{x} {y}\n"));
        }
        fs::write(&path, out).map_err(|e| io_err(e, &path))?;
        written.push(path);
    }
    Ok(written)
}

/// Provenance sidecar for a run.  Metric values are reproduced exactly by
/// rerunning the same config and seed; the timestamps are not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub artifact_version: String,
    pub seed: u64,
    pub trials: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub results: ResultsDoc,
}

pub fn emit_run_record(record: &RunRecord, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(record)
        .map_err(|e| CliError::Run(format!("serialize run record: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| io_err(e, path))
}

/// Human-readable rendering of a results document.
pub fn render_table(doc: &ResultsDoc, out: &mut impl Write) -> std::io::Result<()> {
    match doc {
        ResultsDoc::Theorem { report } => {
            writeln!(out, "theorem verification: {}", report.name)?;
            for check in &report.checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                let precision = if check.insufficient_precision {
                    "  [insufficient precision]"
                } else {
                    ""
                };
                writeln!(
                    out,
                    "  [{status}] {:<48} measured {:>12.6}  bound {}{precision}",
                    check.name, check.measured, check.bound
                )?;
            }
            writeln!(out, "overall: {}", if report.passed { "PASS" } else { "FAIL" })?;
        }
        ResultsDoc::Sweep { cells } => {
            writeln!(out, "{:>6} {:>8} {:>12} {:>12} {:>10} {:>6}", "n", "m", "probability", "le", "log_le", "pass")?;
            for c in cells {
                writeln!(
                    out,
                    "{:>6} {:>8} {:>12.4} {:>12.4} {:>10.4} {:>6}",
                    c.n,
                    c.m,
                    c.probe.probability,
                    c.le.ratio,
                    c.le.log_ratio,
                    if c.meets_threshold { "yes" } else { "no" }
                )?;
            }
        }
        other => {
            let text = serde_json::to_string_pretty(other).unwrap_or_default();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}
