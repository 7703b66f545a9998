//! `fit`: ingest, sample, and write summaries, diagnostics and scores.

use std::path::{Path, PathBuf};

use epimix::forecast::{evaluate, one_step_ahead, ForecastDraws};
use epimix::io::{write_draws, write_index_map};
use epimix::posterior::coefficient_summary;
use epimix::sampler::{posterior_summary, PosteriorSamples, Sampler, SamplerConfig};
use epimix::scoring::{in_sample_scores, ScoreReport};

use super::{ingest, thread_cap, Ingested};
use crate::config::{canonical, output_dir, FitConfig, ForecastConfig, Loaded};
use crate::error::{exit, CliResult, Tag};
use crate::manifest::Manifest;
use crate::output::{num, opt, summary_cells, write_csv, write_text, SUMMARY_HEADER};

pub const DRAWS_FILE: &str = "draws.bin";

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub dir: PathBuf,
    pub max_psrf: Option<f64>,
    pub score: ScoreReport,
    pub exit_code: i32,
}

pub fn cmd_fit(loaded: Loaded<FitConfig>) -> CliResult<FitOutcome> {
    let cfg = loaded.config;
    let variant = cfg.model.variant()?;
    cfg.sampler.validate().ingest()?;
    cfg.priors.validate().ingest()?;
    let ing = ingest(&cfg.data)?;
    if let Some(m) = &loaded.manifest {
        m.check_data(&ing.data_hash)?;
    }
    let dir = output_dir(&cfg.output, None)?;

    let mut sampler_cfg = cfg.sampler.clone();
    if let Some(cap) = thread_cap()? {
        sampler_cfg.threads = Some(sampler_cfg.threads.map_or(cap, |t| t.min(cap)));
    }
    let samples = Sampler::new(&ing.data, &variant, &ing.weights, &cfg.priors, &sampler_cfg)
        .sampler()?
        .run()
        .sampler()?;

    write_draws(&dir.join(DRAWS_FILE), &samples).ingest()?;
    write_index_map(&dir.join("index_map.csv"), &ing.area_ids).ingest()?;
    write_posterior_summary(&dir, &samples)?;
    write_coefficients(&dir, &ing, &samples)?;
    let max_psrf = write_diagnostics(&dir, &samples)?;
    if cfg.output.trace {
        write_trace(&dir, &samples, &cfg.sampler)?;
    }
    let seed = cfg.sampler.seed;
    let score = score_run(&samples, &ing, cfg.score.seed.unwrap_or(seed), &cfg.forecast, seed)?;
    write_scores(&dir, &ing, &score)?;

    let manifest = Manifest::new("fit", canonical(&cfg)?, Some(ing.data_hash.clone()), Some(seed));
    manifest.write(&dir)?;
    let exit_code = if max_psrf.is_some_and(|r| !(r <= 1.1)) {
        exit::CONVERGENCE
    } else {
        exit::SUCCESS
    };
    Ok(FitOutcome {
        dir,
        max_psrf,
        score,
        exit_code,
    })
}

pub fn write_posterior_summary(dir: &Path, samples: &PosteriorSamples) -> CliResult<()> {
    let rows = posterior_summary(samples, |_| true).ingest()?;
    let layout = samples.layout();
    let mut header = vec!["parameter"];
    header.extend(SUMMARY_HEADER);
    header.push("psrf");
    write_csv(
        &dir.join("posterior_summary.csv"),
        &header,
        rows.iter().map(|r| {
            let mut row = vec![r.name.clone()];
            row.extend(summary_cells(&r.summary));
            row.push(opt(samples.psrf(layout.index_of(&r.name).expect("summary names come from the layout"))));
            row
        }),
    )
}

/// `rho_lambda.csv`, `Rx_Lx.csv` and, for mixtures, `omega.csv`.
pub fn write_coefficients(dir: &Path, ing: &Ingested, samples: &PosteriorSamples) -> CliResult<()> {
    let c = coefficient_summary(samples).ingest()?;
    let m = c.n_modelled;
    let mut rows = Vec::with_capacity(c.n_areas * m);
    for (i, id) in ing.area_ids.iter().enumerate() {
        for t in 1..=m {
            let k = i * m + t - 1;
            rows.push(vec![
                id.clone(),
                ing.label(t).to_string(),
                num(c.rho_mean[k]),
                num(c.lambda_mean[k]),
                num(c.rho_exceed[k]),
                num(c.lambda_exceed[k]),
            ]);
        }
    }
    write_csv(
        &dir.join("rho_lambda.csv"),
        &["area_id", "period", "rho_mean", "lambda_mean", "p_rho_gt1", "p_lambda_gt1"],
        rows,
    )?;
    write_csv(
        &dir.join("Rx_Lx.csv"),
        &["period", "rx_mean", "lx_mean", "rho_bar", "lambda_bar"],
        (1..=m).map(|t| {
            vec![
                ing.label(t).to_string(),
                num(c.rx_mean[t - 1]),
                num(c.lx_mean[t - 1]),
                num(c.rho_bar[t - 1]),
                num(c.lambda_bar[t - 1]),
            ]
        }),
    )?;
    if samples.variant().kind.is_mixture() {
        let ratios = epimix::forecast::growth_ratios(&ing.data);
        let mut header = vec!["period"];
        header.extend(SUMMARY_HEADER);
        header.push("growth_ratio");
        let mut rows = Vec::with_capacity(m);
        for t in 1..=m {
            let draws = samples
                .pooled_by_name(&format!("omega[{t}]"))
                .expect("mixture layouts name every weight");
            let s = epimix::sampler::summarize(&draws).ingest()?;
            let mut row = vec![ing.label(t).to_string()];
            row.extend(summary_cells(&s));
            row.push(opt(ratios[t - 1]));
            rows.push(row);
        }
        write_csv(&dir.join("omega.csv"), &header, rows)?;
    }
    Ok(())
}

/// Writes PSRF per parameter and acceptance rates; returns the largest PSRF.
pub fn write_diagnostics(dir: &Path, samples: &PosteriorSamples) -> CliResult<Option<f64>> {
    let mut rows = Vec::new();
    let mut max: Option<f64> = None;
    for (k, name) in samples.layout().names().iter().enumerate() {
        if let Some(r) = samples.psrf(k) {
            max = Some(max.map_or(r, |m: f64| if r.is_nan() || r > m { r } else { m }));
            rows.push(vec!["psrf".to_string(), name.clone(), num(r)]);
        }
    }
    rows.push(vec!["psrf_max".to_string(), "all".to_string(), opt(max)]);
    for (family, accepted, attempted) in samples.acceptance().entries() {
        rows.push(vec![
            "acceptance".to_string(),
            family.name().to_string(),
            num(accepted as f64 / attempted as f64),
        ]);
    }
    write_csv(&dir.join("diagnostics.csv"), &["kind", "name", "value"], rows)?;
    Ok(max)
}

/// Long-format `trace.csv`: chain, iteration, parameter, value.
pub fn write_trace(dir: &Path, samples: &PosteriorSamples, sampler: &SamplerConfig) -> CliResult<()> {
    let names = samples.layout().names();
    let rows = (0..samples.n_chains()).flat_map(|c| {
        (0..samples.n_draws()).flat_map(move |d| {
            let iteration = sampler.n_burnin + (d + 1) * sampler.thin;
            samples.draw(c, d).iter().zip(names).map(move |(&x, name)| {
                vec![c.to_string(), iteration.to_string(), name.clone(), num(x)]
            })
        })
    });
    write_csv(&dir.join("trace.csv"), &["chain", "iteration", "parameter", "value"], rows)
}

/// In-sample scores plus, when a holdout is present, one-step scores.
pub fn score_run(
    samples: &PosteriorSamples,
    ing: &Ingested,
    score_seed: u64,
    forecast: &ForecastConfig,
    fit_seed: u64,
) -> CliResult<ScoreReport> {
    let mut report = in_sample_scores(samples, &ing.data, &ing.weights, score_seed).sampler()?;
    if let Some(holdout) = ing.data.holdout() {
        let draws = forecast_draws(samples, ing, forecast, fit_seed)?;
        let eval = evaluate(&draws, holdout).ingest()?;
        report.one_step_rps = Some(eval.total_rps);
        report.coverage_hits = Some(eval.area_coverage);
    }
    Ok(report)
}

pub fn forecast_draws(
    samples: &PosteriorSamples,
    ing: &Ingested,
    forecast: &ForecastConfig,
    fit_seed: u64,
) -> CliResult<ForecastDraws> {
    one_step_ahead(
        samples,
        &ing.data,
        &ing.weights,
        forecast.seed.unwrap_or(fit_seed),
        forecast.omega,
    )
    .sampler()
}

pub fn write_scores(dir: &Path, ing: &Ingested, report: &ScoreReport) -> CliResult<()> {
    write_text(&dir.join("score.txt"), &report.to_key_value())?;
    let mut rows = vec![
        vec!["waic".to_string(), num(report.waic)],
        vec!["p_waic".to_string(), num(report.p_waic)],
        vec!["lppd".to_string(), num(report.lppd)],
        vec!["p_waic_negative".to_string(), report.p_waic_negative.to_string()],
        vec!["n_observations".to_string(), report.n_observations.to_string()],
        vec!["rps_total".to_string(), num(report.rps_total)],
        vec!["rps_mean".to_string(), num(report.rps_mean)],
        vec!["dss_total".to_string(), num(report.dss_total)],
        vec!["dss_mean".to_string(), num(report.dss_mean)],
    ];
    rows.push(vec!["one_step_rps".to_string(), opt(report.one_step_rps)]);
    rows.push(vec!["coverage_hits".to_string(), opt(report.coverage_hits)]);
    write_csv(&dir.join("score.csv"), &["metric", "value"], rows)?;
    write_csv(
        &dir.join("score_by_period.csv"),
        &["period", "rps"],
        report
            .rps_by_period
            .iter()
            .enumerate()
            .map(|(k, r)| vec![ing.label(k + 1).to_string(), num(*r)]),
    )
}
