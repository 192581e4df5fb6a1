//! CSV result tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting in
//! scientific notation, so reading a file back recovers every value exactly.

use std::io::Write;
use std::path::Path;

use bmec_core::SchemeTag;
use thiserror::Error;

use crate::sweep::ResultRow;

pub const HEADER: [&str; 7] = [
    "sweep_value",
    "scheme",
    "mean_bits",
    "std_bits",
    "feasible_fraction",
    "mean_iterations",
    "mean_solve_ms",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("no result rows to write")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Writes `rows` to any sink.
pub fn write_csv<W: Write>(rows: &[ResultRow], sink: W) -> Result<(), OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            num(r.sweep_value),
            r.scheme.name().to_string(),
            num(r.mean_bits),
            num(r.std_bits),
            num(r.feasible_fraction),
            num(r.mean_iterations),
            num(r.mean_solve_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` to `path`. Nothing is created when `rows` is empty.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, OutputError> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(OutputError::Malformed {
            row: 0,
            message: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let bad = |message: String| OutputError::Malformed { row: i + 1, message };
        if record.len() != HEADER.len() {
            return Err(bad(format!("expected {} fields", HEADER.len())));
        }
        let f = |j: usize| -> Result<f64, OutputError> {
            record[j]
                .parse()
                .map_err(|_| bad(format!("{}: not a number", HEADER[j])))
        };
        let scheme: SchemeTag = record[1].parse().map_err(|e: bmec_core::problem::UnknownScheme| bad(e.to_string()))?;
        rows.push(ResultRow {
            sweep_value: f(0)?,
            scheme,
            mean_bits: f(2)?,
            std_bits: f(3)?,
            feasible_fraction: f(4)?,
            mean_iterations: f(5)?,
            mean_solve_ms: f(6)?,
        });
    }
    Ok(rows)
}
