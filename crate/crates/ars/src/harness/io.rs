//! File emission and re-ingestion.
//!
//! Curves are JSONL (one [`CurvePoint`] per line, schema `ars-curve-v1`),
//! summaries are CSV, manifests are JSON. All floats are written in
//! shortest-round-trip form, so replaying a manifest reproduces files
//! byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{ArsError, Result};

use super::metrics::CurvePoint;

/// Field names and units of the curve/summary schemas; bump when a field
/// changes meaning.
pub const SCHEMA_VERSION: &str = "ars-v1";

pub fn write_curve_jsonl(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for point in curve {
        serde_json::to_writer(&mut w, point)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_jsonl(path: &Path) -> Result<Vec<CurvePoint>> {
    let reader = BufReader::new(File::open(path)?);
    let mut curve = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let point: CurvePoint = serde_json::from_str(&line).map_err(|e| {
            ArsError::Parse(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        curve.push(point);
    }
    Ok(curve)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
