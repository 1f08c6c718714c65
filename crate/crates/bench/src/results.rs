//! Aggregated result rows and their CSV/JSON encodings.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str = "sweep,rel_err_mean,success_rate,time_mean_s,outer_iters_mean,support_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub sweep: String,
    pub rel_err_mean: f64,
    pub success_rate: f64,
    pub time_mean_s: f64,
    pub outer_iters_mean: f64,
    pub support_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        // Display for f64 is the shortest representation that parses back exactly
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sweep, r.rel_err_mean, r.success_rate, r.time_mean_s, r.outer_iters_mean, r.support_mean
        ));
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(BenchError::Parse(format!("unexpected header {other:?}"))),
    }
    let num = |s: &str| f64::from_str(s).map_err(|e| BenchError::Parse(format!("{s:?}: {e}")));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(BenchError::Parse(format!("expected 6 columns, got {}", cols.len())));
            }
            Ok(ResultRow {
                sweep: cols[0].to_string(),
                rel_err_mean: num(cols[1])?,
                success_rate: num(cols[2])?,
                time_mean_s: num(cols[3])?,
                outer_iters_mean: num(cols[4])?,
                support_mean: num(cols[5])?,
            })
        })
        .collect()
}

pub fn to_json(rows: &[ResultRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn from_json(text: &str) -> Result<Vec<ResultRow>> {
    Ok(serde_json::from_str(text)?)
}

pub fn encode(rows: &[ResultRow], format: Format) -> Result<String> {
    if rows.is_empty() {
        return Err(BenchError::Plan("no rows to emit".into()));
    }
    match format {
        Format::Csv => Ok(to_csv(rows)),
        Format::Json => to_json(rows),
    }
}

pub fn emit_results(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    fs::write(path, encode(rows, format)?)?;
    Ok(())
}

pub fn parse_results(text: &str, format: Format) -> Result<Vec<ResultRow>> {
    match format {
        Format::Csv => from_csv(text),
        Format::Json => from_json(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                sweep: "inf".into(),
                rel_err_mean: 0.1 + 0.2,
                success_rate: 0.35,
                time_mean_s: 1.0 / 3.0,
                outer_iters_mean: 4.5,
                support_mean: 8.0,
            },
            ResultRow {
                sweep: "4".into(),
                rel_err_mean: 1e-17,
                success_rate: 1.0,
                time_mean_s: 0.0,
                outer_iters_mean: 3.0,
                support_mean: 4.25,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let text = to_csv(&rows());
        assert_eq!(from_csv(&text).unwrap(), rows());
        for line in text.lines() {
            assert_eq!(line.split(',').count(), 6);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        assert_eq!(from_json(&to_json(&rows()).unwrap()).unwrap(), rows());
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(encode(&[], Format::Csv).is_err());
    }

    #[test]
    fn bad_column_count_rejected() {
        assert!(from_csv(&format!("{CSV_HEADER}\na,1,2\n")).is_err());
    }
}
