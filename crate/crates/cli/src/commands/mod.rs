//! Subcommand implementations. Each returns the process exit code on
//! success paths (0 or the convergence warning code).

pub mod compare;
pub mod fit;
pub mod run;
pub mod simulate;

use std::path::Path;

use anyhow::Context;
use epimix::graph::{row_standardize, SpatialWeights};
use epimix::io::{read_adjacency, read_counts, read_covariate};
use epimix::model::PanelData;

use crate::config::DataConfig;
use crate::error::{CliResult, Tag};
use crate::manifest::hash_files;

/// Data ready for the sampler, with the canonical area order.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub area_ids: Vec<String>,
    /// Period labels from the counts file, including a reserved holdout.
    pub period_labels: Vec<i64>,
    pub data: PanelData,
    pub weights: SpatialWeights,
    pub data_hash: String,
}

impl Ingested {
    /// File label of a panel period.
    pub fn label(&self, period: usize) -> i64 {
        self.period_labels[period]
    }
}

pub fn ingest(cfg: &DataConfig) -> CliResult<Ingested> {
    let table = read_counts(&cfg.counts).ingest()?;
    let covariate = match &cfg.covariate {
        Some(p) => read_covariate(p, &table.area_ids).ingest()?,
        None => vec![0.0; table.n_areas()],
    };
    if cfg.holdout && table.n_periods() < 3 {
        return Err(anyhow::anyhow!("holdout needs at least 3 periods in the counts file")).ingest();
    }
    let data = table.into_panel(covariate, cfg.holdout).ingest()?;
    let (graph, interactions) = read_adjacency(&cfg.adjacency, &table.area_ids).ingest()?;
    let weights = row_standardize(&graph, interactions.as_ref()).ingest()?;
    let mut files: Vec<&Path> = vec![&cfg.counts, &cfg.adjacency];
    if let Some(c) = &cfg.covariate {
        files.push(c);
    }
    let mut data_hash = hash_files(&files)?;
    // The holdout flag changes the data seen by the model.
    if cfg.holdout {
        data_hash.push_str("+holdout");
    }
    Ok(Ingested {
        area_ids: table.area_ids,
        period_labels: table.periods,
        data,
        weights,
        data_hash,
    })
}

/// Number of chain workers allowed by `EPIMIX_THREADS`, if set.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("EPIMIX_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .with_context(|| format!("EPIMIX_THREADS must be a positive integer, got '{v}'"))
            .ingest(),
        Err(_) => Ok(None),
    }
}
