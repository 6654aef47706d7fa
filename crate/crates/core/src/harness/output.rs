//! Result tables and their CSV/JSON encodings.
//!
//! Floating-point values are written with 12 significant digits in
//! exponent form (`{:.11e}`), which never depends on locale.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::Mode;

/// One (mode, SNR, trial) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Sweep axis name, empty outside sweeps.
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub mode: Mode,
    pub snr_db: f64,
    pub trial: usize,
    /// Total sum rate over sub-carriers, bits/s/Hz.
    pub sum_rate: f64,
    /// Served users per sub-carrier, averaged.
    pub mean_served: f64,
    /// Rank of the stacked precoder.
    pub rank: usize,
    pub s_tilde: usize,
    pub pair_count: usize,
    pub cpps_max_error: f64,
    /// Average-rate bound for this mode and SNR, when requested.
    pub bound: Option<f64>,
}

pub const RESULT_COLUMNS: &[&str] = &[
    "sweep_axis",
    "sweep_value",
    "mode",
    "snr_db",
    "trial",
    "sum_rate",
    "mean_served",
    "rank",
    "s_tilde",
    "pair_count",
    "cpps_max_error",
    "bound",
];

/// Bound evaluation for one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub snr_db: f64,
    pub power: f64,
    pub asb: f64,
    pub hb: f64,
    pub db: f64,
}

pub const BOUND_COLUMNS: &[&str] = &["snr_db", "power", "asb", "hb", "db"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}', expected csv or json")),
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.11e}")
}

fn round_f64(v: f64) -> f64 {
    fmt_f64(v).parse().unwrap_or(v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn result_record(r: &ResultRow) -> Vec<String> {
    vec![
        r.sweep_axis.clone(),
        fmt_opt(r.sweep_value),
        r.mode.name().to_string(),
        fmt_f64(r.snr_db),
        r.trial.to_string(),
        fmt_f64(r.sum_rate),
        fmt_f64(r.mean_served),
        r.rank.to_string(),
        r.s_tilde.to_string(),
        r.pair_count.to_string(),
        fmt_f64(r.cpps_max_error),
        fmt_opt(r.bound),
    ]
}

fn rounded(r: &ResultRow) -> ResultRow {
    ResultRow {
        sweep_value: r.sweep_value.map(round_f64),
        snr_db: round_f64(r.snr_db),
        sum_rate: round_f64(r.sum_rate),
        mean_served: round_f64(r.mean_served),
        cpps_max_error: round_f64(r.cpps_max_error),
        bound: r.bound.map(round_f64),
        ..r.clone()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV text of a result table; header only when empty.
pub fn results_to_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(result_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn results_to_json<W: Write>(rows: &[ResultRow], out: W) -> serde_json::Result<()> {
    let rows: Vec<ResultRow> = rows.iter().map(rounded).collect();
    serde_json::to_writer_pretty(out, &rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    results_to_csv(rows, &mut f).map_err(|e| csv_error(path, e))?;
    f.flush().map_err(|e| io_error(path, e))
}

pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    results_to_json(rows, &mut f).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    f.write_all(b"\n").map_err(|e| io_error(path, e))?;
    f.flush().map_err(|e| io_error(path, e))
}

pub fn emit(rows: &[ResultRow], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => emit_csv(rows, path),
        Format::Json => emit_json(rows, path),
    }
}

fn field(rec: &csv::StringRecord, i: usize) -> std::result::Result<&str, String> {
    rec.get(i)
        .ok_or_else(|| format!("missing column {}", RESULT_COLUMNS[i]))
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
    let s = field(rec, i)?;
    s.parse()
        .map_err(|_| format!("column {}: cannot parse '{s}'", RESULT_COLUMNS[i]))
}

fn opt_num(rec: &csv::StringRecord, i: usize) -> std::result::Result<Option<f64>, String> {
    if field(rec, i)?.is_empty() {
        Ok(None)
    } else {
        num(rec, i).map(Some)
    }
}

/// Parses CSV written by [`results_to_csv`].
pub fn results_from_csv<R: Read>(input: R) -> std::result::Result<Vec<ResultRow>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(format!("unexpected header {header:?}"));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(ResultRow {
                sweep_axis: field(&rec, 0)?.to_string(),
                sweep_value: opt_num(&rec, 1)?,
                mode: field(&rec, 2)?.parse()?,
                snr_db: num(&rec, 3)?,
                trial: num(&rec, 4)?,
                sum_rate: num(&rec, 5)?,
                mean_served: num(&rec, 6)?,
                rank: num(&rec, 7)?,
                s_tilde: num(&rec, 8)?,
                pair_count: num(&rec, 9)?,
                cpps_max_error: num(&rec, 10)?,
                bound: opt_num(&rec, 11)?,
            })
        })
        .collect()
}

pub fn results_from_json<R: Read>(input: R) -> std::result::Result<Vec<ResultRow>, String> {
    serde_json::from_reader(input).map_err(|e| e.to_string())
}

/// Reads a result file written by [`emit`].
pub fn read_results(path: &Path, format: Format) -> Result<Vec<ResultRow>> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    let parsed = match format {
        Format::Csv => results_from_csv(f),
        Format::Json => results_from_json(f),
    };
    parsed.map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn bounds_to_csv<W: Write>(rows: &[BoundRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUND_COLUMNS)?;
    for r in rows {
        w.write_record([r.snr_db, r.power, r.asb, r.hb, r.db].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn bounds_to_json<W: Write>(rows: &[BoundRow], out: W) -> serde_json::Result<()> {
    let rows: Vec<BoundRow> = rows
        .iter()
        .map(|r| BoundRow {
            snr_db: round_f64(r.snr_db),
            power: round_f64(r.power),
            asb: round_f64(r.asb),
            hb: round_f64(r.hb),
            db: round_f64(r.db),
        })
        .collect();
    serde_json::to_writer_pretty(out, &rows)
}

pub fn emit_bounds(rows: &[BoundRow], path: &Path, format: Format) -> Result<()> {
    let mut f = create(path)?;
    match format {
        Format::Csv => bounds_to_csv(rows, &mut f).map_err(|e| csv_error(path, e))?,
        Format::Json => {
            bounds_to_json(rows, &mut f).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            f.write_all(b"\n").map_err(|e| io_error(path, e))?;
        }
    }
    f.flush().map_err(|e| io_error(path, e))
}
