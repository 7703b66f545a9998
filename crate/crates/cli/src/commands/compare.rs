//! `compare`: one row per fitted run from its `score.csv`, sorted by WAIC.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Context};

use crate::config::{canonical, output_dir, CompareConfig, Loaded};
use crate::error::{exit, CliResult, Tag};
use crate::manifest::{file_name, Manifest};
use crate::output::{num, opt, read_csv, write_csv};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub run: String,
    pub variant: String,
    pub waic: f64,
    pub p_waic: f64,
    pub rps_total: f64,
    pub dss_total: f64,
    pub one_step_rps: Option<f64>,
    pub coverage: Option<f64>,
}

fn read_row(dir: &Path) -> CliResult<(ComparisonRow, Option<String>)> {
    let manifest = Manifest::read(&dir.join(file_name("fit")))?;
    let variant = manifest
        .config
        .get("model")
        .and_then(|m| m.get("variant"))
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow!("fit manifest in {} names no variant", dir.display()))
        .ingest()?;
    let range = manifest
        .config
        .get("model")
        .and_then(|m| m.get("range"))
        .and_then(|v| v.as_str())
        .unwrap_or("unit");
    let (_, table) = read_csv(&dir.join("score.csv"))?;
    let scores: HashMap<String, String> = table
        .into_iter()
        .filter_map(|row| match row.as_slice() {
            [k, v] => Some((k.clone(), v.clone())),
            _ => None,
        })
        .collect();
    let get = |key: &str| -> CliResult<Option<f64>> {
        scores
            .get(key)
            .filter(|v| v.as_str() != "NA")
            .map(|v| v.parse::<f64>().with_context(|| format!("score.csv in {}: bad {key}", dir.display())))
            .transpose()
            .ingest()
    };
    let need = |key: &str| -> CliResult<f64> {
        get(key)?
            .ok_or_else(|| anyhow!("score.csv in {} has no {key}", dir.display()))
            .ingest()
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let row = ComparisonRow {
        run: name,
        variant: if range == "signed" { format!("{variant}-signed") } else { variant.to_string() },
        waic: need("waic")?,
        p_waic: need("p_waic")?,
        rps_total: need("rps_total")?,
        dss_total: need("dss_total")?,
        one_step_rps: get("one_step_rps")?,
        coverage: get("coverage_hits")?,
    };
    Ok((row, manifest.data_hash))
}

/// Reads the runs, refusing mixed data, and sorts by WAIC ascending.
pub fn comparison(runs: &[impl AsRef<Path>]) -> CliResult<(Vec<ComparisonRow>, Option<String>)> {
    if runs.is_empty() {
        return Err(anyhow!("compare needs at least one run directory")).ingest();
    }
    let mut rows = Vec::new();
    let mut hash: Option<Option<String>> = None;
    for dir in runs {
        let (row, h) = read_row(dir.as_ref())?;
        match &hash {
            None => hash = Some(h),
            Some(first) if *first != h => {
                return Err(anyhow!(
                    "run {} was fitted to different data than {}",
                    dir.as_ref().display(),
                    runs[0].as_ref().display()
                ))
                .ingest();
            }
            _ => {}
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| a.waic.total_cmp(&b.waic));
    Ok((rows, hash.flatten()))
}

pub fn cmd_compare(loaded: Loaded<CompareConfig>) -> CliResult<i32> {
    let cfg = &loaded.config;
    let (rows, hash) = comparison(&cfg.runs)?;
    if let (Some(m), Some(h)) = (&loaded.manifest, &hash) {
        m.check_data(h)?;
    }
    let dir = output_dir(&cfg.output, None)?;
    write_csv(
        &dir.join("comparison.csv"),
        &["run", "variant", "waic", "p_waic", "rps_total", "dss_total", "one_step_rps", "coverage"],
        rows.iter().map(|r| {
            vec![
                r.run.clone(),
                r.variant.clone(),
                num(r.waic),
                num(r.p_waic),
                num(r.rps_total),
                num(r.dss_total),
                opt(r.one_step_rps),
                opt(r.coverage),
            ]
        }),
    )?;
    for r in &rows {
        println!(
            "{:<16} {:<10} waic {:>14.2}  rps {:>12.2}  dss {:>12.2}  one-step rps {:>10}",
            r.run,
            r.variant,
            r.waic,
            r.rps_total,
            r.dss_total,
            r.one_step_rps.map_or("NA".to_string(), |v| format!("{v:.2}"))
        );
    }
    Manifest::new("compare", canonical(cfg)?, hash, None).write(&dir)?;
    Ok(exit::SUCCESS)
}
