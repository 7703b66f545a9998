//! `forecast`, `score` and `diag`: commands that work on a fitted run.

use std::path::{Path, PathBuf};

use epimix::forecast::evaluate;
use epimix::io::read_draws;
use epimix::sampler::PosteriorSamples;
use epimix::scoring::coverage;

use super::fit::{forecast_draws, score_run, write_diagnostics, write_scores, write_trace, DRAWS_FILE};
use super::{ingest, Ingested};
use crate::config::{canonical, output_dir, FitConfig, Loaded, RunConfig};
use crate::error::{exit, CliResult, Tag};
use crate::manifest::{file_name, Manifest};
use crate::output::{num, summary_cells, write_csv, SUMMARY_HEADER};

/// A fitted run reloaded from its directory.
pub struct FittedRun {
    pub dir: PathBuf,
    pub config: FitConfig,
    pub manifest: Manifest,
    pub data: Ingested,
    pub samples: PosteriorSamples,
}

pub fn load_run(dir: &Path) -> CliResult<FittedRun> {
    let manifest = Manifest::read(&dir.join(file_name("fit")))?;
    let config: FitConfig = manifest
        .config
        .clone()
        .try_into()
        .map_err(|e| anyhow::anyhow!("fit manifest in {} is invalid: {e}", dir.display()))
        .ingest()?;
    let data = ingest(&config.data)?;
    manifest.check_data(&data.data_hash)?;
    let samples = read_draws(&dir.join(DRAWS_FILE)).ingest()?;
    Ok(FittedRun {
        dir: dir.to_path_buf(),
        config,
        manifest,
        data,
        samples,
    })
}

fn open(loaded: &Loaded<RunConfig>) -> CliResult<(FittedRun, PathBuf)> {
    let run = load_run(&loaded.config.run)?;
    if let Some(m) = &loaded.manifest {
        m.check_data(&run.data.data_hash)?;
    }
    let dir = output_dir(&loaded.config.output, Some(&run.dir))?;
    Ok((run, dir))
}

fn finish(command: &str, cfg: &RunConfig, run: &FittedRun, dir: &Path, seed: Option<u64>) -> CliResult<()> {
    Manifest::new(command, canonical(cfg)?, Some(run.data.data_hash.clone()), seed).write(dir)?;
    Ok(())
}

pub fn cmd_forecast(loaded: Loaded<RunConfig>) -> CliResult<i32> {
    let (run, dir) = open(&loaded)?;
    let cfg = &loaded.config;
    let fit_seed = run.config.sampler.seed;
    let draws = forecast_draws(&run.samples, &run.data, &cfg.forecast, fit_seed)?;
    let holdout = run.data.data.holdout();
    let next_label = run.data.label(run.data.data.n_periods() - 1) + 1;

    let mut header = vec!["area_id"];
    header.extend(SUMMARY_HEADER);
    header.extend(["actual", "covered"]);
    let mut rows = Vec::new();
    for (i, id) in run.data.area_ids.iter().enumerate() {
        let s = draws.area_summary(i).sampler()?;
        let mut row = vec![id.clone()];
        row.extend(summary_cells(&s));
        match holdout {
            Some(h) => {
                row.push(h[i].to_string());
                row.push(coverage(s.q025, s.q975, h[i] as f64).ingest()?.to_string());
            }
            None => row.extend(["NA".to_string(), "NA".to_string()]),
        }
        rows.push(row);
    }
    write_csv(&dir.join("forecast_areas.csv"), &header, rows)?;

    let s = draws.total_summary().sampler()?;
    let mut header = vec!["period"];
    header.extend(SUMMARY_HEADER);
    header.extend(["actual", "covered"]);
    let mut row = vec![next_label.to_string()];
    row.extend(summary_cells(&s));
    match holdout {
        Some(h) => {
            let total: u64 = h.iter().sum();
            row.push(total.to_string());
            row.push(coverage(s.q025, s.q975, total as f64).ingest()?.to_string());
        }
        None => row.extend(["NA".to_string(), "NA".to_string()]),
    }
    write_csv(&dir.join("forecast_total.csv"), &header, [row])?;

    if let Some(h) = holdout {
        let e = evaluate(&draws, h).ingest()?;
        write_csv(
            &dir.join("forecast_eval.csv"),
            &["metric", "value"],
            [
                vec!["actual_total".to_string(), e.actual_total.to_string()],
                vec!["total_rps".to_string(), num(e.total_rps)],
                vec!["area_rps".to_string(), num(e.area_rps)],
                vec!["total_covered".to_string(), e.total_covered.to_string()],
                vec!["area_coverage".to_string(), num(e.area_coverage)],
            ],
        )?;
    }
    finish("forecast", cfg, &run, &dir, Some(cfg.forecast.seed.unwrap_or(fit_seed)))?;
    Ok(exit::SUCCESS)
}

pub fn cmd_score(loaded: Loaded<RunConfig>) -> CliResult<i32> {
    let (run, dir) = open(&loaded)?;
    let cfg = &loaded.config;
    let fit_seed = run.config.sampler.seed;
    let seed = cfg.score.seed.or(run.config.score.seed).unwrap_or(fit_seed);
    let report = score_run(&run.samples, &run.data, seed, &cfg.forecast, fit_seed)?;
    write_scores(&dir, &run.data, &report)?;
    finish("score", cfg, &run, &dir, Some(seed))?;
    Ok(exit::SUCCESS)
}

pub fn cmd_diag(loaded: Loaded<RunConfig>) -> CliResult<i32> {
    let (run, dir) = open(&loaded)?;
    let cfg = &loaded.config;
    let max = write_diagnostics(&dir, &run.samples)?;
    if cfg.output.trace {
        write_trace(&dir, &run.samples, &run.config.sampler)?;
    }
    finish("diag", cfg, &run, &dir, None)?;
    Ok(if max.is_some_and(|r| !(r <= cfg.psrf_threshold)) {
        exit::CONVERGENCE
    } else {
        exit::SUCCESS
    })
}
