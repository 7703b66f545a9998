//! Predictive scores: WAIC, ranked probability score, Dawid-Sebastiani
//! score and interval coverage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SpatialWeights;
use crate::model::{intensities, nb_log_pmf, sample_nb, PanelData};
use crate::sampler::PosteriorSamples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waic {
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
}

/// Streams draws of pointwise log-likelihoods, one draw at a time.
#[derive(Debug, Clone)]
pub struct WaicAccumulator {
    n_draws: usize,
    max: Vec<f64>,
    /// `sum exp(ll - max)` per observation.
    scaled: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WaicAccumulator {
    pub fn new(n_obs: usize) -> Self {
        Self {
            n_draws: 0,
            max: vec![f64::NEG_INFINITY; n_obs],
            scaled: vec![0.0; n_obs],
            mean: vec![0.0; n_obs],
            m2: vec![0.0; n_obs],
        }
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn push(&mut self, pointwise: &[f64]) -> Result<()> {
        if pointwise.len() != self.max.len() {
            return Err(Error::LengthMismatch {
                what: "pointwise log-likelihood",
                expected: self.max.len(),
                got: pointwise.len(),
            });
        }
        if let Some(k) = pointwise.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("log-likelihood of observation {k}")));
        }
        self.n_draws += 1;
        let n = self.n_draws as f64;
        for (k, &ll) in pointwise.iter().enumerate() {
            if ll > self.max[k] {
                self.scaled[k] = self.scaled[k] * (self.max[k] - ll).exp() + 1.0;
                self.max[k] = ll;
            } else {
                self.scaled[k] += (ll - self.max[k]).exp();
            }
            let d = ll - self.mean[k];
            self.mean[k] += d / n;
            self.m2[k] += d * (ll - self.mean[k]);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Waic> {
        if self.n_draws < 2 {
            return Err(Error::domain("WAIC needs at least two draws"));
        }
        let n = self.n_draws as f64;
        let lppd: f64 = self
            .max
            .iter()
            .zip(&self.scaled)
            .map(|(m, s)| m + (s / n).ln())
            .sum();
        let p_waic: f64 = self.m2.iter().map(|m2| m2 / (n - 1.0)).sum();
        Ok(Waic {
            waic: -2.0 * (lppd - p_waic),
            p_waic,
            lppd,
        })
    }
}

/// WAIC from a draws × observations matrix of log-likelihoods.
pub fn waic(pointwise: &[Vec<f64>]) -> Result<Waic> {
    let n_obs = pointwise.first().map_or(0, Vec::len);
    let mut acc = WaicAccumulator::new(n_obs);
    for row in pointwise {
        acc.push(row)?;
    }
    acc.finish()
}

/// Ranked probability score of the empirical distribution of `draws` at `y`.
///
/// The sum over `k` runs to `max(draws, y)` exactly, grouped into runs where
/// both the empirical CDF and the step at `y` are constant.
pub fn rps(draws: &[u64], y: u64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("predictive draws"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_unstable();
    Ok(rps_sorted(&sorted, y))
}

pub(crate) fn rps_sorted(sorted: &[u64], y: u64) -> f64 {
    let n = sorted.len() as f64;
    let mut total = 0.0;
    let mut below = 0usize;
    // Start at the smallest breakpoint; earlier terms are all zero.
    let mut k = sorted[0].min(y);
    loop {
        while below < sorted.len() && sorted[below] <= k {
            below += 1;
        }
        let step = if y <= k { 1.0 } else { 0.0 };
        let f = below as f64 / n;
        if below == sorted.len() && y <= k {
            break;
        }
        let next_draw = sorted.get(below).copied().unwrap_or(u64::MAX);
        let next_y = if y > k { y } else { u64::MAX };
        let next = next_draw.min(next_y);
        total += (next - k) as f64 * (f - step) * (f - step);
        k = next;
    }
    total
}

/// Dawid-Sebastiani score `(y - mean)^2 / var + ln var`.
pub fn dss(mean: f64, var: f64, y: f64) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::domain(format!("DSS needs a positive variance, got {var}")));
    }
    Ok((y - mean).powi(2) / var + var.ln())
}

/// Whether `actual` lies in the closed interval `[low, high]`.
pub fn coverage(low: f64, high: f64, actual: f64) -> Result<bool> {
    if low > high {
        return Err(Error::domain(format!("inverted interval ({low}, {high})")));
    }
    Ok(low <= actual && actual <= high)
}

/// Sample mean and variance (`n - 1` denominator) of integer draws.
pub fn draw_moments(draws: &[u64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().map(|&y| y as f64).sum::<f64>() / n;
    if draws.len() < 2 {
        return (mean, 0.0);
    }
    let var = draws.iter().map(|&y| (y as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    /// Set when Monte Carlo noise drives `p_waic` below zero.
    pub p_waic_negative: bool,
    pub n_observations: usize,
    pub rps_total: f64,
    pub rps_mean: f64,
    /// Sum over areas, per modelled period (absolute periods `1..T`).
    pub rps_by_period: Vec<f64>,
    pub dss_total: f64,
    pub dss_mean: f64,
    pub one_step_rps: Option<f64>,
    /// Share of held-out values inside their 95% intervals.
    pub coverage_hits: Option<f64>,
}

impl ScoreReport {
    /// Flat `key = value` lines; optional scores are omitted when absent.
    pub fn to_key_value(&self) -> String {
        let mut lines = vec![
            format!("waic = {}", self.waic),
            format!("p_waic = {}", self.p_waic),
            format!("lppd = {}", self.lppd),
            format!("p_waic_negative = {}", self.p_waic_negative),
            format!("n_observations = {}", self.n_observations),
            format!("rps_total = {}", self.rps_total),
            format!("rps_mean = {}", self.rps_mean),
            format!("dss_total = {}", self.dss_total),
            format!("dss_mean = {}", self.dss_mean),
        ];
        if let Some(v) = self.one_step_rps {
            lines.push(format!("one_step_rps = {v}"));
        }
        if let Some(v) = self.coverage_hits {
            lines.push(format!("coverage_hits = {v}"));
        }
        lines.join("\n") + "\n"
    }
}

/// In-sample WAIC, RPS and DSS over every modelled cell.
///
/// Each retained draw contributes one replicate `y_rep ~ NB(mu_it, psi)` per
/// cell, generated from `seed`. DSS uses the replicate mean and variance and
/// falls back to the exact mixture variance `E[mu + mu^2/psi] + Var(mu)` when
/// every replicate of a cell is equal.
pub fn in_sample_scores(
    samples: &PosteriorSamples,
    data: &PanelData,
    weights: &SpatialWeights,
    seed: u64,
) -> Result<ScoreReport> {
    let n = data.n_areas();
    let m = data.n_periods() - 1;
    let cells = n * m;
    let n_draws = samples.total_draws();
    let variant = *samples.variant();
    let mut acc = WaicAccumulator::new(cells);
    let mut reps = vec![0u64; cells * n_draws];
    let mut mu_sum = vec![0.0; cells];
    let mut mu_sq = vec![0.0; cells];
    let mut nb_var = vec![0.0; cells];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ll = vec![0.0; cells];
    for (d, state) in samples.states().enumerate() {
        let mu = intensities(&state, &variant, weights, data)?;
        for (c, &mu_c) in mu.iter().enumerate() {
            let (i, t) = (c / m, c % m + 1);
            ll[c] = nb_log_pmf(data.count(i, t), mu_c, state.psi)?;
            reps[c * n_draws + d] = sample_nb(&mut rng, mu_c, state.psi)?;
            mu_sum[c] += mu_c;
            mu_sq[c] += mu_c * mu_c;
            nb_var[c] += mu_c + mu_c * mu_c / state.psi;
        }
        acc.push(&ll)?;
    }
    let w = acc.finish()?;

    let nd = n_draws as f64;
    let mut rps_by_period = vec![0.0; m];
    let mut rps_total = 0.0;
    let mut dss_total = 0.0;
    for c in 0..cells {
        let (i, t) = (c / m, c % m + 1);
        let y = data.count(i, t);
        let draws = &mut reps[c * n_draws..(c + 1) * n_draws];
        draws.sort_unstable();
        let r = rps_sorted(draws, y);
        rps_by_period[t - 1] += r;
        rps_total += r;
        let (mean, mut var) = draw_moments(draws);
        if var <= 0.0 {
            let mean_mu = mu_sum[c] / nd;
            var = nb_var[c] / nd + (mu_sq[c] / nd - mean_mu * mean_mu).max(0.0);
        }
        dss_total += dss(mean, var, y as f64)?;
    }
    Ok(ScoreReport {
        waic: w.waic,
        p_waic: w.p_waic,
        lppd: w.lppd,
        p_waic_negative: w.p_waic < 0.0,
        n_observations: cells,
        rps_total,
        rps_mean: rps_total / cells as f64,
        rps_by_period,
        dss_total,
        dss_mean: dss_total / cells as f64,
        one_step_rps: None,
        coverage_hits: None,
    })
}

/// Pointwise log-likelihood of every retained draw, computed on demand.
pub fn pointwise_log_likelihood(
    samples: &PosteriorSamples,
    data: &PanelData,
    weights: &SpatialWeights,
) -> Result<Vec<Vec<f64>>> {
    let variant = *samples.variant();
    samples
        .states()
        .map(|s| crate::model::log_likelihood(&s, &variant, weights, data).map(|l| l.pointwise))
        .collect()
}
