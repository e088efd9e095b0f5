//! Result tables. CSV columns are fixed:
//! `algorithm,beta,window,steps,seed,k,estimate,exact,rel_err,wall_s`.
//! Missing values are empty cells in CSV and `null` in JSONL.

use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub algorithm: String,
    pub beta: Option<f64>,
    pub window: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub k: usize,
    pub estimate: Option<f64>,
    pub exact: Option<f64>,
    pub rel_err: Option<f64>,
    pub wall_s: Option<f64>,
}

impl ResultRecord {
    /// A computed quantity with no estimate attached.
    pub fn exact(name: &str, beta: Option<f64>, k: usize, value: Option<f64>) -> Self {
        Self {
            algorithm: name.to_owned(),
            beta,
            window: None,
            steps: None,
            seed: None,
            k,
            estimate: None,
            exact: value,
            rel_err: None,
            wall_s: None,
        }
    }
}

pub const RESULT_COLUMNS: [&str; 10] =
    ["algorithm", "beta", "window", "steps", "seed", "k", "estimate", "exact", "rel_err", "wall_s"];

/// `|estimate - exact| / max(|exact|, 1e-12)`.
pub fn relative_error(estimate: f64, exact: f64) -> f64 {
    (estimate - exact).abs() / exact.abs().max(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub steps: usize,
    pub seeds_used: usize,
    pub bias_angle_deg: Option<f64>,
    pub degenerate: bool,
    /// Per-coordinate variances.
    pub variance: Vec<f64>,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["beta", "steps", "seeds_used", "bias_angle_deg", "degenerate", "variance"];

/// Shortest representation that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_owned()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn write_jsonl<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> CliResult<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(csv_err)?;
        out.write_all(b"\n").map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

pub fn write_results<W: Write>(out: W, records: &[ResultRecord], format: Format) -> CliResult<()> {
    match format {
        Format::Csv => write_csv(
            out,
            &RESULT_COLUMNS,
            records.iter().map(|r| {
                vec![
                    r.algorithm.clone(),
                    opt_f64(r.beta),
                    opt(r.window),
                    opt(r.steps),
                    opt(r.seed),
                    r.k.to_string(),
                    opt_f64(r.estimate),
                    opt_f64(r.exact),
                    opt_f64(r.rel_err),
                    opt_f64(r.wall_s),
                ]
            }),
        ),
        Format::Jsonl => write_jsonl(out, records),
    }
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow], format: Format) -> CliResult<()> {
    match format {
        Format::Csv => write_csv(
            out,
            &SWEEP_COLUMNS,
            rows.iter().map(|r| {
                vec![
                    fmt_f64(r.beta),
                    r.steps.to_string(),
                    r.seeds_used.to_string(),
                    opt_f64(r.bias_angle_deg),
                    r.degenerate.to_string(),
                    r.variance.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"),
                ]
            }),
        ),
        Format::Jsonl => write_jsonl(out, rows),
    }
}
