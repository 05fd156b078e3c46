//! Schema-checked CSV output and JSON run metadata.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => format!("{x}"),
            Field::Int(x) => x.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::Int(x as i64)
    }
}

impl From<u32> for Field {
    fn from(x: u32) -> Self {
        Field::Int(i64::from(x))
    }
}

impl From<u64> for Field {
    fn from(x: u64) -> Self {
        Field::Int(x as i64)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Text(s)
    }
}

/// Column names plus which columns must hold finite numbers.
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub header: &'static [&'static str],
    pub numeric: &'static [bool],
}

pub const CURVE: Schema = Schema {
    header: &["epoch", "lr", "loss"],
    numeric: &[true, true, true],
};

pub const HISTOGRAM: Schema = Schema {
    header: &["n_sched", "bin_left_db", "bin_right_db", "density"],
    numeric: &[true, true, true, true],
};

pub const RMSE_BY_SIZE: Schema = Schema {
    header: &["n_sched", "estimates", "rmse_db", "mean_error_db"],
    numeric: &[true, true, true, true],
};

pub const CDF: Schema = Schema {
    header: &["c_min_mbps", "c_max_mbps", "abs_error_db", "cdf"],
    numeric: &[true, true, true, true],
};

pub const SCHEDULE: Schema = Schema {
    header: &["c_min_mbps", "c_max_mbps", "period", "slot_index", "user_ids"],
    numeric: &[true, true, true, true, false],
};

pub const COMPLEXITY: Schema = Schema {
    header: &["n_c", "mmse", "csi_dmhsa", "geo_dmhsa"],
    numeric: &[true, true, true, true],
};

fn violation(path: &Path, reason: impl Into<String>) -> LabError {
    LabError::Schema {
        file: path.display().to_string(),
        reason: reason.into(),
    }
}

fn check_row(path: &Path, schema: &Schema, i: usize, row: &[String]) -> Result<()> {
    if row.len() != schema.header.len() {
        return Err(violation(
            path,
            format!("row {i} has {} columns, expected {}", row.len(), schema.header.len()),
        ));
    }
    for (j, (cell, numeric)) in row.iter().zip(schema.numeric).enumerate() {
        if *numeric && !cell.parse::<f64>().is_ok_and(f64::is_finite) {
            return Err(violation(path, format!("row {i} column {} is not a finite number: {cell:?}", schema.header[j])));
        }
    }
    Ok(())
}

/// Validates every row, then writes the file.
pub fn write_csv(path: &Path, schema: &Schema, rows: &[Vec<Field>]) -> Result<()> {
    let rendered: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(Field::render).collect()).collect();
    for (i, row) in rendered.iter().enumerate() {
        check_row(path, schema, i, row)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(schema.header)?;
    for row in &rendered {
        w.write_record(row)?;
    }
    w.flush().map_err(LabError::io(format!("writing {}", path.display())))?;
    Ok(())
}

/// Re-reads a CSV and checks it against `schema`; returns the data rows.
pub fn read_csv(path: &Path, schema: &Schema) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != schema.header {
        return Err(violation(path, format!("header {header:?}, expected {:?}", schema.header)));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row: Vec<String> = rec?.iter().map(str::to_string).collect();
        check_row(path, schema, i, &row)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(LabError::io(format!("writing {}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct RunMetadata<'a, T: Serialize> {
    pub command: &'a str,
    pub git_describe: String,
    pub wall_time_s: f64,
    pub config: &'a ExperimentConfig,
    pub summary: T,
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_metadata<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    wall: Duration,
    summary: T,
) -> Result<()> {
    let meta = RunMetadata {
        command,
        git_describe: git_describe(),
        wall_time_s: wall.as_secs_f64(),
        config,
        summary,
    };
    write_json(&dir.join(format!("{command}_run.json")), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let rows = vec![vec![Field::from(0u32), Field::from(0.1 + 0.2), Field::from(1.5)]];
        write_csv(&p, &CURVE, &rows).unwrap();
        let back = read_csv(&p, &CURVE).unwrap();
        assert_eq!(back[0][1].parse::<f64>().unwrap(), 0.1 + 0.2);

        let bad = vec![vec![Field::from(0u32), Field::from(f64::NAN), Field::from(1.0)]];
        assert!(matches!(write_csv(&p, &CURVE, &bad), Err(LabError::Schema { .. })));
        let short = vec![vec![Field::from(0u32)]];
        assert!(write_csv(&p, &CURVE, &short).is_err());
        assert!(read_csv(&p, &HISTOGRAM).is_err());
    }
}
