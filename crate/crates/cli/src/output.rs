//! CSV and text writers for command outputs.
//!
//! Reals are written with the shortest representation that parses back to
//! the same `f64`, so files round-trip exactly.

use std::path::Path;

use anyhow::Context;
use epimix::sampler::Summary;

use crate::error::{CliResult, Tag};

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

pub const SUMMARY_HEADER: [&str; 5] = ["mean", "sd", "q2.5", "q50", "q97.5"];

pub fn summary_cells(s: &Summary) -> Vec<String> {
    [s.mean, s.sd, s.q025, s.q50, s.q975].into_iter().map(num).collect()
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    write().with_context(|| format!("writing {}", path.display())).ingest()
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .ingest()
}

/// Reads a CSV into a header and string rows.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let read = || -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok((header, rows))
    };
    read().with_context(|| format!("reading {}", path.display())).ingest()
}
