//! Problem and solution files.
//!
//! A problem is a JSON manifest next to two raw little-endian `f64` files holding `A`
//! (column-major) and `y`. Paths in the manifest are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Exponent, GroupPartition, GroupedVector, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    #[serde(rename = "M")]
    pub rows: usize,
    #[serde(rename = "N")]
    pub cols: usize,
    pub group_sizes: Vec<usize>,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub r: Exponent,
    #[serde(rename = "A_file")]
    pub a_file: String,
    pub y_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSidecar {
    #[serde(rename = "N")]
    pub cols: usize,
    pub group_sizes: Vec<usize>,
    pub x_file: String,
    pub support: Vec<usize>,
    pub objective: f64,
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, expected {} values",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn sibling(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem").to_string()
}

/// Writes `<stem>.json`, `<stem>.A.bin` and `<stem>.y.bin` for the manifest path given.
pub fn write_problem(manifest: &Path, problem: &ProblemSpec) -> Result<()> {
    let stem = file_stem(manifest);
    let a_file = format!("{stem}.A.bin");
    let y_file = format!("{stem}.y.bin");
    write_f64s(&sibling(manifest, &a_file), problem.a().as_slice())?;
    write_f64s(&sibling(manifest, &y_file), problem.y().as_slice())?;
    let meta = ProblemManifest {
        rows: problem.rows(),
        cols: problem.cols(),
        group_sizes: problem.partition().sizes().to_vec(),
        alpha: problem.alpha(),
        p: problem.p(),
        q: problem.q(),
        r: problem.r(),
        a_file,
        y_file,
    };
    fs::write(manifest, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_problem(manifest: &Path) -> Result<ProblemSpec> {
    let meta: ProblemManifest = serde_json::from_str(&fs::read_to_string(manifest)?)?;
    let partition = Arc::new(GroupPartition::new(meta.group_sizes)?);
    if partition.len() != meta.cols {
        return Err(Error::DimensionMismatch(format!(
            "group sizes cover {} columns, manifest says {}",
            partition.len(),
            meta.cols
        )));
    }
    let a = read_f64s(&sibling(manifest, &meta.a_file), meta.rows * meta.cols)?;
    let y = read_f64s(&sibling(manifest, &meta.y_file), meta.rows)?;
    ProblemSpec::new(
        DMatrix::from_vec(meta.rows, meta.cols, a),
        DVector::from_vec(y),
        meta.alpha,
        meta.p,
        meta.q,
        meta.r,
        partition,
    )
}

/// Writes the vector to `<stem>.x.bin` and the sidecar to the given path.
pub fn write_solution(sidecar: &Path, x: &GroupedVector, support: &[usize], objective: f64) -> Result<()> {
    let x_file = format!("{}.x.bin", file_stem(sidecar));
    write_f64s(&sibling(sidecar, &x_file), x.values().as_slice())?;
    let meta = SolutionSidecar {
        cols: x.values().len(),
        group_sizes: x.partition().sizes().to_vec(),
        x_file,
        support: support.to_vec(),
        objective,
    };
    fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_solution(sidecar: &Path) -> Result<(GroupedVector, SolutionSidecar)> {
    let meta: SolutionSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    let partition = Arc::new(GroupPartition::new(meta.group_sizes.clone())?);
    let values = read_f64s(&sibling(sidecar, &meta.x_file), meta.cols)?;
    Ok((GroupedVector::from_vec(values, partition)?, meta))
}
