//! Table files: CSV with a `#` provenance header, or JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{RowStatus, SweepRecord};

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 7] = ["param", "u_mc", "u_mc_stderr", "u_asym", "rel_err", "status", "note"];

/// Everything needed to rerun a table bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub vary: String,
    pub seed: u64,
    /// Fine time step, or `auto` for `(ε/10)²` per row.
    pub dt: String,
    pub dt_max: String,
    pub particles: u64,
    pub workers: usize,
    pub simulated: bool,
    /// Canonical config text that `config_hash` covers.
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOutput {
    pub provenance: Provenance,
    pub rows: Vec<SweepRecord>,
}

pub fn version_string() -> String {
    format!("spine-escape {}", env!("CARGO_PKG_VERSION"))
}

fn io_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.to_string(), message: e.to_string() }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn status_text(s: RowStatus) -> &'static str {
    match s {
        RowStatus::Ok => "ok",
        RowStatus::Flagged => "flagged",
        RowStatus::Invalid => "invalid",
    }
}

/// Writes the provenance as `# key=value` lines (the config text is
/// embedded verbatim after `# `), then the rows.
pub fn write_csv(table: &TableOutput, mut out: impl Write, path: &str) -> Result<()> {
    let p = &table.provenance;
    let mut header = format!(
        "# {}\n# config_hash={}\n# vary={}\n# seed={}\n# dt={}\n# dt_max={}\n# particles={}\n# workers={}\n# simulated={}\n",
        p.version, p.config_hash, p.vary, p.seed, p.dt, p.dt_max, p.particles, p.workers, p.simulated
    );
    for line in p.config.lines() {
        header.push_str("# ");
        header.push_str(line);
        header.push('\n');
    }
    out.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;

    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(|e| io_err(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.param.to_string(),
            cell(r.u_mc),
            cell(r.u_mc_stderr),
            cell(r.u_asym),
            cell(r.rel_err),
            status_text(r.status).to_string(),
            r.note.clone().unwrap_or_default(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json(table: &TableOutput, mut out: impl Write, path: &str) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, table).map_err(|e| io_err(path, e))?;
    out.write_all(b"\n").map_err(|e| io_err(path, e))
}

pub fn read_json(input: impl Read, path: &str) -> Result<TableOutput> {
    serde_json::from_reader(input).map_err(|e| io_err(path, e))
}

#[derive(Deserialize)]
struct CsvRow {
    param: f64,
    u_mc: Option<f64>,
    u_mc_stderr: Option<f64>,
    u_asym: Option<f64>,
    rel_err: Option<f64>,
    status: RowStatus,
    note: Option<String>,
}

/// Reads the rows of a CSV table, skipping the `#` header.
pub fn read_csv(input: impl Read, path: &str) -> Result<Vec<SweepRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| io_err(path, e))?;
            Ok(SweepRecord {
                param: row.param,
                u_mc: row.u_mc,
                u_mc_stderr: row.u_mc_stderr,
                u_asym: row.u_asym,
                rel_err: row.rel_err,
                status: row.status,
                note: row.note.filter(|n| !n.is_empty()),
            })
        })
        .collect()
}

/// `(eps, value)` pairs from a CSV file with an `eps` or `param` column and
/// the named value column. Rows with an empty value are skipped.
pub fn read_fit_rows(input: impl Read, path: &str, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let x_col = find("eps")
        .or_else(|| find("param"))
        .ok_or_else(|| Error::Config(format!("{path}: no `eps` or `param` column")))?;
    let y_col = find(column).ok_or_else(|| Error::Config(format!("{path}: no `{column}` column")))?;

    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let (x, y) = (rec.get(x_col).unwrap_or("").trim(), rec.get(y_col).unwrap_or("").trim());
        if y.is_empty() {
            continue;
        }
        let parse =
            |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("{path}: cannot parse `{s}` as a number")));
        rows.push((parse(x)?, parse(y)?));
    }
    Ok(rows)
}
