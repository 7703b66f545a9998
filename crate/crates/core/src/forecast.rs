//! One-step-ahead posterior predictive draws for areas and the region total.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialWeights;
use crate::model::{area_components, check_dims, sample_nb, LatentState, ModelVariant, PanelData};
use crate::sampler::{summarize, PosteriorSamples, Summary};
use crate::scoring::{coverage, rps};

/// How the mixture weight for the forecast period is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaForecast {
    /// Carry the last modelled weight forward.
    #[default]
    Persist,
    /// Draw from `Beta(q1, q2)` of the last modelled period.
    Beta,
}

/// Predictive draws for the period after the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDraws {
    n_areas: usize,
    /// Draw-major: `counts[d * n_areas + i]`.
    counts: Vec<u64>,
    totals: Vec<u64>,
    /// Predictive intensities, same layout as `counts`.
    means: Vec<f64>,
}

impl ForecastDraws {
    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_draws(&self) -> usize {
        self.totals.len()
    }

    pub fn draw(&self, d: usize) -> &[u64] {
        &self.counts[d * self.n_areas..(d + 1) * self.n_areas]
    }

    pub fn area_draws(&self, area: usize) -> Vec<u64> {
        self.counts.iter().skip(area).step_by(self.n_areas).copied().collect()
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    /// `mu_{i,T+1}` for draw `d`.
    pub fn intensity(&self, d: usize, area: usize) -> f64 {
        self.means[d * self.n_areas + area]
    }

    /// Average over draws of the summed intensities.
    pub fn mean_total_intensity(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.n_draws() as f64
    }

    pub fn area_summary(&self, area: usize) -> Result<Summary> {
        let v: Vec<f64> = self.area_draws(area).into_iter().map(|y| y as f64).collect();
        summarize(&v)
    }

    pub fn total_summary(&self) -> Result<Summary> {
        let v: Vec<f64> = self.totals.iter().map(|&y| y as f64).collect();
        summarize(&v)
    }
}

/// Predictive intensities at the period after the panel for one state.
///
/// `z` holds one standard normal per area for the random-walk step and
/// `omega` is the mixture weight used by mixture variants.
fn next_intensity(
    state: &LatentState,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    data: &PanelData,
    omega: f64,
    z: &[f64],
) -> Vec<f64> {
    let last = data.n_periods() - 1;
    let w = match variant.kind {
        crate::model::ModelKind::M1 => 1.0,
        crate::model::ModelKind::M2 => 0.0,
        _ => omega,
    };
    let sd = state.sigma2_delta.sqrt();
    (0..data.n_areas())
        .map(|i| {
            let (a1, b1) = area_components(variant, state, 0, i);
            let (a2, b2) = area_components(variant, state, 1, i);
            let rho = w * a1 + (1.0 - w) * b1;
            let lambda = w * a2 + (1.0 - w) * b2;
            let lag: f64 = weights
                .row(i)
                .iter()
                .map(|&(j, wij)| wij * data.count(j, last) as f64)
                .sum();
            let delta = state.delta(i, last) + sd * z[i];
            rho * data.count(i, last) as f64
                + lambda * lag
                + (state.eta(data.covariate(), i) + delta).exp()
        })
        .collect()
}

/// Draws `y_{i,T+1}` once per retained posterior draw. Draw `d` uses its own
/// random stream derived from `seed`, so results do not depend on how draws
/// are scheduled.
pub fn one_step_ahead(
    samples: &PosteriorSamples,
    data: &PanelData,
    weights: &SpatialWeights,
    seed: u64,
    omega_rule: OmegaForecast,
) -> Result<ForecastDraws> {
    let n = data.n_areas();
    let variant = *samples.variant();
    let n_draws = samples.total_draws();
    let mut counts = Vec::with_capacity(n_draws * n);
    let mut totals = Vec::with_capacity(n_draws);
    let mut means = Vec::with_capacity(n_draws * n);
    let mut z = vec![0.0; n];
    for (d, state) in samples.states().enumerate() {
        check_dims(&state, weights, data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(d as u64);
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let omega = if variant.kind.is_mixture() {
            let t = state.omega.len() - 1;
            match omega_rule {
                OmegaForecast::Persist => state.omega[t],
                OmegaForecast::Beta => Beta::new(state.q1[t], state.q2[t])
                    .map_err(|e| Error::domain(e.to_string()))?
                    .sample(&mut rng),
            }
        } else {
            0.0
        };
        let mu = next_intensity(&state, &variant, weights, data, omega, &z);
        let mut total = 0u64;
        for (i, &m) in mu.iter().enumerate() {
            if !m.is_finite() || m <= 0.0 {
                return Err(Error::NonFinite(format!("forecast intensity for area {i}")));
            }
            let y = sample_nb(&mut rng, m, state.psi)?;
            counts.push(y);
            total += y;
        }
        totals.push(total);
        means.extend(mu);
    }
    if totals.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    Ok(ForecastDraws {
        n_areas: n,
        counts,
        totals,
        means,
    })
}

/// Scores of the forecast against the held-out period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastEvaluation {
    pub actual_total: u64,
    /// RPS of the region-total forecast.
    pub total_rps: f64,
    /// Sum over areas of the per-area RPS.
    pub area_rps: f64,
    pub total_covered: bool,
    /// Share of areas whose 95% interval covers the held-out count.
    pub area_coverage: f64,
}

pub fn evaluate(draws: &ForecastDraws, holdout: &[u64]) -> Result<ForecastEvaluation> {
    if holdout.len() != draws.n_areas() {
        return Err(Error::LengthMismatch {
            what: "holdout",
            expected: draws.n_areas(),
            got: holdout.len(),
        });
    }
    let actual_total: u64 = holdout.iter().sum();
    let total = draws.total_summary()?;
    let mut area_rps = 0.0;
    let mut covered = 0usize;
    for (i, &y) in holdout.iter().enumerate() {
        area_rps += rps(&draws.area_draws(i), y)?;
        let s = draws.area_summary(i)?;
        covered += coverage(s.q025, s.q975, y as f64)? as usize;
    }
    Ok(ForecastEvaluation {
        actual_total,
        total_rps: rps(draws.totals(), actual_total)?,
        area_rps,
        total_covered: coverage(total.q025, total.q975, actual_total as f64)?,
        area_coverage: covered as f64 / holdout.len() as f64,
    })
}

/// `Y_t / Y_{t-1}` for `t = 1..T-1`; `None` where the previous total is zero.
pub fn growth_ratios(data: &PanelData) -> Vec<Option<f64>> {
    let totals = data.totals();
    totals
        .windows(2)
        .map(|w| (w[0] > 0).then(|| w[1] as f64 / w[0] as f64))
        .collect()
}
