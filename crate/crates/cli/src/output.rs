use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use shine_core::outer::RunTrace;

use crate::args::Format;
use crate::error::CliResult;

pub const SCHEMA_LINE: &str = "schema=1";

pub const TRACE_COLUMNS: [&str; 14] = [
    "outer_iter",
    "theta",
    "train_loss",
    "val_loss",
    "test_loss",
    "inner_iters",
    "backward_iters",
    "fallback_count",
    "cumulative_seconds",
    "tol",
    "adjoint_residual",
    "step_size",
    "cosine",
    "status",
];

/// Finite values in shortest round-trip form; anything else as `nan`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "nan".into()
    }
}

fn seconds(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "nan".into()
    }
}

/// Writes the schema line followed by a headed CSV table.
pub fn write_csv_table<W: Write>(mut out: W, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_records(trace: &RunTrace) -> Vec<Vec<String>> {
    trace
        .rows
        .iter()
        .map(|r| {
            vec![
                r.outer_iter.to_string(),
                r.theta.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";"),
                num(r.train_loss),
                num(r.val_loss),
                num(r.test_loss),
                r.inner_iters.to_string(),
                r.backward_iters.to_string(),
                r.fallback_count.to_string(),
                seconds(r.cumulative_seconds),
                num(r.tol),
                num(r.adjoint_residual),
                num(r.step_size),
                num(r.cosine),
                r.status.as_str().to_string(),
            ]
        })
        .collect()
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes a trace as `<stem>.csv` or `<stem>.json` under `dir` and returns the path.
pub fn write_trace(dir: &Path, stem: &str, trace: &RunTrace, format: Format) -> CliResult<PathBuf> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_csv_table(create(&path)?, &TRACE_COLUMNS, &trace_records(trace))?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, trace)?;
            Ok(path)
        }
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Replaces every row's timing with the row-wise median over repeated runs of the
/// same configuration. Runs are assumed identical apart from timing.
pub fn median_timing(mut runs: Vec<RunTrace>) -> Option<RunTrace> {
    let mut first = runs.first()?.clone();
    for (i, row) in first.rows.iter_mut().enumerate() {
        let times: Vec<f64> = runs.iter_mut().filter_map(|r| r.rows.get(i)).map(|r| r.cumulative_seconds).collect();
        row.cumulative_seconds = shine_core::outer::median(&times);
    }
    first.metadata.insert("repeats".into(), runs.len().to_string());
    Some(first)
}

/// File-name-safe form of a method descriptor.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}
