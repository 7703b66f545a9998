//! Panel data, model variants, latent parameters and the negative binomial
//! autoregressive likelihood.
//!
//! Periods are indexed from 0. Period 0 is conditioned on: the likelihood
//! covers periods `1..n_periods`, and every per-period quantity that only
//! exists for modelled periods (mixture weights, link coefficients) is indexed
//! by the absolute period and stored with an offset of one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::SpatialWeights;

/// Upper bound applied to the log-link argument before exponentiation.
pub const LOG_LINK_CAP: f64 = 30.0;

/// Observed counts `y_it` (areas × periods) with a centred area covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    n_areas: usize,
    n_periods: usize,
    counts: Vec<u64>,
    covariate: Vec<f64>,
    holdout: Option<Vec<u64>>,
}

impl PanelData {
    /// `counts` is area-major (`counts[i * n_periods + t]`). The covariate is
    /// mean-centred here, so passing an already centred vector is harmless.
    pub fn new(
        n_areas: usize,
        n_periods: usize,
        counts: Vec<u64>,
        covariate: Vec<f64>,
    ) -> Result<Self> {
        if n_areas == 0 {
            return Err(Error::Empty("panel has no areas"));
        }
        if n_periods < 2 {
            return Err(Error::domain(format!(
                "panel needs at least 2 periods, got {n_periods}"
            )));
        }
        if counts.len() != n_areas * n_periods {
            return Err(Error::LengthMismatch {
                what: "counts",
                expected: n_areas * n_periods,
                got: counts.len(),
            });
        }
        if covariate.len() != n_areas {
            return Err(Error::LengthMismatch {
                what: "covariate",
                expected: n_areas,
                got: covariate.len(),
            });
        }
        if covariate.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariate".into()));
        }
        let mean = covariate.iter().sum::<f64>() / n_areas as f64;
        let covariate = covariate.into_iter().map(|x| x - mean).collect();
        Ok(Self {
            n_areas,
            n_periods,
            counts,
            covariate,
            holdout: None,
        })
    }

    /// Attaches the per-area counts for the period after the last observed one.
    pub fn with_holdout(mut self, holdout: Vec<u64>) -> Result<Self> {
        if holdout.len() != self.n_areas {
            return Err(Error::LengthMismatch {
                what: "holdout",
                expected: self.n_areas,
                got: holdout.len(),
            });
        }
        self.holdout = Some(holdout);
        Ok(self)
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn count(&self, area: usize, period: usize) -> u64 {
        self.counts[area * self.n_periods + period]
    }

    pub fn area_counts(&self, area: usize) -> &[u64] {
        &self.counts[area * self.n_periods..(area + 1) * self.n_periods]
    }

    /// All area counts at one period, as reals.
    pub fn period_counts(&self, period: usize) -> Vec<f64> {
        (0..self.n_areas)
            .map(|i| self.count(i, period) as f64)
            .collect()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Centred covariate `X_i`.
    pub fn covariate(&self) -> &[f64] {
        &self.covariate
    }

    pub fn holdout(&self) -> Option<&[u64]> {
        self.holdout.as_deref()
    }

    /// Region-wide totals `Y_t`.
    pub fn totals(&self) -> Vec<u64> {
        (0..self.n_periods)
            .map(|t| (0..self.n_areas).map(|i| self.count(i, t)).sum())
            .collect()
    }

    /// Number of modelled `(area, period)` cells.
    pub fn n_observations(&self) -> usize {
        self.n_areas * (self.n_periods - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Log link on the autoregressive coefficients.
    M1,
    /// Logit link.
    M2,
    /// Link mixture with spatial effects shared between components.
    M3,
    /// Link mixture with phase-specific spatial effects.
    M4,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::M4];

    pub fn is_mixture(self) -> bool {
        matches!(self, ModelKind::M3 | ModelKind::M4)
    }

    pub fn has_stationary_component(self) -> bool {
        self != ModelKind::M1
    }

    pub fn uses_alpha(self) -> bool {
        self != ModelKind::M2
    }

    pub fn uses_kappa(self) -> bool {
        self != ModelKind::M1
    }

    /// CAR fields present in this variant, `u` last.
    pub fn car_fields(self) -> &'static [CarField] {
        use CarField::*;
        match self {
            ModelKind::M1 => &[F1, F2, U],
            ModelKind::M2 => &[F3, F4, U],
            ModelKind::M3 => &[G1, G2, U],
            ModelKind::M4 => &[G1, G2, G3, G4, U],
        }
    }

    /// Field entering the log-link component of coefficient `k` (0 = own
    /// lag, 1 = spatial lag).
    pub fn explosive_field(self, k: usize) -> Option<CarField> {
        use CarField::*;
        match self {
            ModelKind::M1 => Some([F1, F2][k]),
            ModelKind::M2 => None,
            ModelKind::M3 | ModelKind::M4 => Some([G1, G2][k]),
        }
    }

    /// Field entering the logit-link component of coefficient `k`.
    pub fn stationary_field(self, k: usize) -> Option<CarField> {
        use CarField::*;
        match self {
            ModelKind::M1 => None,
            ModelKind::M2 => Some([F3, F4][k]),
            ModelKind::M3 => Some([G1, G2][k]),
            ModelKind::M4 => Some([G3, G4][k]),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::M3 => "m3",
            ModelKind::M4 => "m4",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelKind::M1),
            "m2" => Ok(ModelKind::M2),
            "m3" => Ok(ModelKind::M3),
            "m4" => Ok(ModelKind::M4),
            other => Err(Error::Config(format!(
                "unknown model variant {other:?}, expected one of m1, m2, m3, m4"
            ))),
        }
    }
}

/// Range of the stationary (logit) component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryRange {
    /// `expit(h)`, in (0, 1).
    #[default]
    Unit,
    /// `2 expit(h) - 1`, in (-1, 1).
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelVariant {
    pub kind: ModelKind,
    #[serde(default)]
    pub range: StationaryRange,
}

impl ModelVariant {
    pub fn new(kind: ModelKind, range: StationaryRange) -> Result<Self> {
        if range == StationaryRange::Signed && !kind.has_stationary_component() {
            return Err(Error::Config(format!(
                "signed stationary range has no effect for {kind}"
            )));
        }
        Ok(Self { kind, range })
    }

    pub fn unit(kind: ModelKind) -> Self {
        Self {
            kind,
            range: StationaryRange::Unit,
        }
    }

    pub fn stationary_link(&self, h: f64) -> f64 {
        match self.range {
            StationaryRange::Unit => expit(h),
            StationaryRange::Signed => signed_expit(h),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.range {
            StationaryRange::Unit => write!(f, "{}", self.kind),
            StationaryRange::Signed => write!(f, "{}-signed", self.kind),
        }
    }
}

/// The spatially structured (CAR) effects a variant can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CarField {
    F1,
    F2,
    F3,
    F4,
    G1,
    G2,
    G3,
    G4,
    U,
}

impl CarField {
    pub fn name(self) -> &'static str {
        match self {
            CarField::F1 => "f1",
            CarField::F2 => "f2",
            CarField::F3 => "f3",
            CarField::F4 => "f4",
            CarField::G1 => "g1",
            CarField::G2 => "g2",
            CarField::G3 => "g3",
            CarField::G4 => "g4",
            CarField::U => "u",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// One full parameter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    n_areas: usize,
    n_periods: usize,
    /// Log-link intercepts for own lag and spatial lag.
    pub alpha: [f64; 2],
    /// Logit-link intercepts.
    pub kappa: [f64; 2],
    /// `f1..f4`, `g1..g4`, `u`, in [`CarField`] order. Fields a variant does
    /// not use are empty.
    pub car: [Vec<f64>; 9],
    /// ICAR precisions, same order as `car`.
    pub tau: [f64; 9],
    pub beta: f64,
    /// `delta[i * n_periods + t]`.
    pub delta: Vec<f64>,
    pub sigma2_delta: f64,
    /// Mixture weights for periods `1..n_periods` (`omega[t - 1]`); empty for
    /// single-link variants. `q1`, `q2` are their beta parameters.
    pub omega: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    /// Negative binomial dispersion.
    pub psi: f64,
}

impl LatentState {
    /// Default starting point: zero intercepts and effects, unit precisions,
    /// endemic-leaning mixture weights and `psi = 10`.
    pub fn new(kind: ModelKind, n_areas: usize, n_periods: usize) -> Self {
        let mut car: [Vec<f64>; 9] = Default::default();
        for &field in kind.car_fields() {
            car[field.slot()] = vec![0.0; n_areas];
        }
        let n_weights = if kind.is_mixture() { n_periods - 1 } else { 0 };
        Self {
            n_areas,
            n_periods,
            alpha: [0.0; 2],
            kappa: [0.0; 2],
            car,
            tau: [1.0; 9],
            beta: 0.0,
            delta: vec![0.0; n_areas * n_periods],
            sigma2_delta: 1.0,
            omega: vec![0.1; n_weights],
            q1: vec![1.0; n_weights],
            q2: vec![1.0; n_weights],
            psi: 10.0,
        }
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn car(&self, field: CarField) -> &[f64] {
        &self.car[field.slot()]
    }

    pub fn car_mut(&mut self, field: CarField) -> &mut Vec<f64> {
        &mut self.car[field.slot()]
    }

    pub fn tau(&self, field: CarField) -> f64 {
        self.tau[field.slot()]
    }

    pub fn tau_mut(&mut self, field: CarField) -> &mut f64 {
        &mut self.tau[field.slot()]
    }

    pub fn delta(&self, area: usize, period: usize) -> f64 {
        self.delta[area * self.n_periods + period]
    }

    pub fn delta_row(&self, area: usize) -> &[f64] {
        &self.delta[area * self.n_periods..(area + 1) * self.n_periods]
    }

    pub fn delta_precision(&self) -> f64 {
        1.0 / self.sigma2_delta
    }

    /// Mixture weight for a modelled period (`period >= 1`).
    pub fn omega_at(&self, period: usize) -> f64 {
        self.omega[period - 1]
    }

    /// `eta_i = X_i beta + u_i`.
    pub fn eta(&self, covariate: &[f64], area: usize) -> f64 {
        covariate[area] * self.beta + self.car(CarField::U)[area]
    }

    /// Checks dimensions against the variant and the positivity constraints.
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let variant = kind.to_string();
        for &field in kind.car_fields() {
            if self.car(field).len() != self.n_areas {
                return Err(Error::VariantMismatch {
                    variant,
                    missing: field.name(),
                });
            }
            if !(self.tau(field) > 0.0) {
                return Err(Error::domain(format!(
                    "precision for {} must be positive",
                    field.name()
                )));
            }
        }
        if self.delta.len() != self.n_areas * self.n_periods {
            return Err(Error::LengthMismatch {
                what: "delta",
                expected: self.n_areas * self.n_periods,
                got: self.delta.len(),
            });
        }
        if kind.is_mixture() {
            let expected = self.n_periods - 1;
            for (what, v) in [("omega", &self.omega), ("q1", &self.q1), ("q2", &self.q2)] {
                if v.len() != expected {
                    return Err(if v.is_empty() {
                        Error::VariantMismatch {
                            variant,
                            missing: what,
                        }
                    } else {
                        Error::LengthMismatch {
                            what,
                            expected,
                            got: v.len(),
                        }
                    });
                }
            }
            // The boundary is structurally valid; the Beta prior excludes it.
            if self.omega.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::domain("mixture weights must lie in [0, 1]"));
            }
            if self.q1.iter().chain(&self.q2).any(|&q| !(q > 0.0)) {
                return Err(Error::domain("beta parameters must be positive"));
            }
        }
        if !(self.psi > 0.0) || !(self.sigma2_delta > 0.0) {
            return Err(Error::domain("psi and sigma2_delta must be positive"));
        }
        Ok(())
    }
}

pub fn expit(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}

/// `2 expit(h) - 1`, written as `tanh(h / 2)` to keep the odd symmetry exact.
pub fn signed_expit(h: f64) -> f64 {
    (0.5 * h).tanh()
}

pub(crate) fn log_link(arg: f64) -> f64 {
    arg.min(LOG_LINK_CAP).exp()
}

/// Per-area component values for coefficient `k`: the log-link value and
/// the stationary-link value. Components the variant does not use are zero.
pub(crate) fn area_components(
    variant: &ModelVariant,
    state: &LatentState,
    k: usize,
    area: usize,
) -> (f64, f64) {
    let kind = variant.kind;
    let explosive = kind
        .explosive_field(k)
        .map_or(0.0, |f| log_link(state.alpha[k] + state.car(f)[area]));
    let stationary = kind
        .stationary_field(k)
        .map_or(0.0, |f| variant.stationary_link(state.kappa[k] + state.car(f)[area]));
    (explosive, stationary)
}

/// Weight on the log-link component at a modelled period.
pub(crate) fn explosive_weight(kind: ModelKind, state: &LatentState, period: usize) -> f64 {
    match kind {
        ModelKind::M1 => 1.0,
        ModelKind::M2 => 0.0,
        ModelKind::M3 | ModelKind::M4 => state.omega_at(period),
    }
}

/// Autoregressive coefficients `rho_it` and `lambda_it` over modelled periods.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCoefficients {
    n_areas: usize,
    n_modelled: usize,
    rho: Vec<f64>,
    lambda: Vec<f64>,
}

impl LinkCoefficients {
    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    /// Number of modelled periods (`n_periods - 1`).
    pub fn n_modelled(&self) -> usize {
        self.n_modelled
    }

    /// `rho` at an absolute period index `>= 1`.
    pub fn rho(&self, area: usize, period: usize) -> f64 {
        self.rho[area * self.n_modelled + period - 1]
    }

    pub fn lambda(&self, area: usize, period: usize) -> f64 {
        self.lambda[area * self.n_modelled + period - 1]
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho
    }

    pub fn lambda_values(&self) -> &[f64] {
        &self.lambda
    }

    /// Builds coefficients from explicit area-major matrices over modelled
    /// periods.
    pub fn from_values(
        n_areas: usize,
        n_modelled: usize,
        rho: Vec<f64>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        for (what, v) in [("rho", &rho), ("lambda", &lambda)] {
            if v.len() != n_areas * n_modelled {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n_areas * n_modelled,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            n_areas,
            n_modelled,
            rho,
            lambda,
        })
    }
}

pub fn link_coefficients(variant: &ModelVariant, state: &LatentState) -> Result<LinkCoefficients> {
    state.validate(variant.kind)?;
    let n = state.n_areas();
    let m = state.n_periods() - 1;
    let mut rho = Vec::with_capacity(n * m);
    let mut lambda = Vec::with_capacity(n * m);
    for i in 0..n {
        let (a1, b1) = area_components(variant, state, 0, i);
        let (a2, b2) = area_components(variant, state, 1, i);
        for t in 1..=m {
            let w = explosive_weight(variant.kind, state, t);
            rho.push(w * a1 + (1.0 - w) * b1);
            lambda.push(w * a2 + (1.0 - w) * b2);
        }
    }
    Ok(LinkCoefficients {
        n_areas: n,
        n_modelled: m,
        rho,
        lambda,
    })
}

/// `mu_it = rho_it y_{i,t-1} + lambda_it sum_j w_ij y_{j,t-1} + exp(eta_i + delta_it)`.
pub fn mean_intensity(
    state: &LatentState,
    coeffs: &LinkCoefficients,
    weights: &SpatialWeights,
    data: &PanelData,
    area: usize,
    period: usize,
) -> Result<f64> {
    if period == 0 {
        return Err(Error::ConditionedPeriod(period));
    }
    if period >= data.n_periods() || area >= data.n_areas() {
        return Err(Error::domain(format!(
            "cell ({area}, {period}) outside the panel"
        )));
    }
    let own = data.count(area, period - 1) as f64;
    let lag: f64 = weights
        .row(area)
        .iter()
        .map(|&(j, w)| w * data.count(j, period - 1) as f64)
        .sum();
    let endemic = (state.eta(data.covariate(), area) + state.delta(area, period)).exp();
    let mu = coeffs.rho(area, period) * own + coeffs.lambda(area, period) * lag + endemic;
    if !mu.is_finite() {
        return Err(Error::NonFinite(format!(
            "intensity at area {area}, period {period}"
        )));
    }
    Ok(mu)
}

/// `ln Γ(y + ψ) - ln Γ(ψ)`, summed directly for small counts.
pub(crate) fn ln_rising(y: u64, psi: f64) -> f64 {
    if y < 24 {
        (0..y).map(|k| (psi + k as f64).ln()).sum()
    } else {
        ln_gamma(y as f64 + psi) - ln_gamma(psi)
    }
}

pub(crate) fn ln_factorial(y: u64) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

/// Negative binomial log-probability with mean `mu` and dispersion `psi`
/// (variance `mu + mu^2 / psi`).
pub fn nb_log_pmf(y: u64, mu: f64, psi: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!("NB mean must be positive, got {mu}")));
    }
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::domain(format!(
            "NB dispersion must be positive, got {psi}"
        )));
    }
    Ok(nb_log_pmf_unchecked(y, mu, psi, ln_factorial(y)))
}

pub(crate) fn nb_log_pmf_unchecked(y: u64, mu: f64, psi: f64, ln_fact_y: f64) -> f64 {
    let size_term = -psi * (mu / psi).ln_1p();
    let count_term = if y == 0 {
        0.0
    } else {
        y as f64 * (mu.ln() - (mu + psi).ln())
    };
    ln_rising(y, psi) - ln_fact_y + size_term + count_term
}

/// Total log-likelihood plus its pointwise contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    /// Area-major over modelled periods: `pointwise[i * (T - 1) + t - 1]`.
    pub pointwise: Vec<f64>,
}

/// Intensities `mu_it` for every modelled cell, area-major:
/// `mu[i * (T - 1) + t - 1]`.
pub fn intensities(
    state: &LatentState,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    data: &PanelData,
) -> Result<Vec<f64>> {
    check_dims(state, weights, data)?;
    let coeffs = link_coefficients(variant, state)?;
    let n = data.n_areas();
    let periods = data.n_periods();
    let lags: Vec<Vec<f64>> = (0..periods - 1)
        .map(|t| crate::graph::spatial_lag(weights, &data.period_counts(t)))
        .collect::<Result<_>>()?;
    let mut mu = Vec::with_capacity(n * (periods - 1));
    for i in 0..n {
        let eta = state.eta(data.covariate(), i);
        for t in 1..periods {
            let m = coeffs.rho(i, t) * data.count(i, t - 1) as f64
                + coeffs.lambda(i, t) * lags[t - 1][i]
                + (eta + state.delta(i, t)).exp();
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("intensity at area {i}, period {t}")));
            }
            if m <= 0.0 {
                return Err(Error::NonPositiveIntensity {
                    area: i,
                    period: t,
                    mu: m,
                });
            }
            mu.push(m);
        }
    }
    Ok(mu)
}

pub fn log_likelihood(
    state: &LatentState,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    data: &PanelData,
) -> Result<LogLikelihood> {
    let mu = intensities(state, variant, weights, data)?;
    let periods = data.n_periods();
    let pointwise = mu
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let (i, t) = (k / (periods - 1), k % (periods - 1) + 1);
            nb_log_pmf(data.count(i, t), m, state.psi)
        })
        .collect::<Result<Vec<f64>>>()?;
    let total = pointwise.iter().sum();
    Ok(LogLikelihood { total, pointwise })
}

pub(crate) fn check_dims(
    state: &LatentState,
    weights: &SpatialWeights,
    data: &PanelData,
) -> Result<()> {
    if weights.n_areas() != data.n_areas() || state.n_areas() != data.n_areas() {
        return Err(Error::LengthMismatch {
            what: "areas",
            expected: data.n_areas(),
            got: if weights.n_areas() != data.n_areas() {
                weights.n_areas()
            } else {
                state.n_areas()
            },
        });
    }
    if state.n_periods() != data.n_periods() {
        return Err(Error::LengthMismatch {
            what: "periods",
            expected: data.n_periods(),
            got: state.n_periods(),
        });
    }
    Ok(())
}

/// Exceedance indicators `1(rho_it > 1)`, `1(lambda_it > 1)` and their
/// per-period totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Exceedance {
    pub rho_exceeds: Vec<bool>,
    pub lambda_exceeds: Vec<bool>,
    /// Areas with `rho_it > 1`, per modelled period.
    pub rho_total: Vec<usize>,
    pub lambda_total: Vec<usize>,
}

pub fn exceedance_stats(coeffs: &LinkCoefficients) -> Exceedance {
    let n = coeffs.n_areas();
    let m = coeffs.n_modelled();
    let rho_exceeds: Vec<bool> = coeffs.rho.iter().map(|&r| r > 1.0).collect();
    let lambda_exceeds: Vec<bool> = coeffs.lambda.iter().map(|&l| l > 1.0).collect();
    let total = |flags: &[bool]| -> Vec<usize> {
        (0..m)
            .map(|t| (0..n).filter(|&i| flags[i * m + t]).count())
            .collect()
    };
    Exceedance {
        rho_total: total(&rho_exceeds),
        lambda_total: total(&lambda_exceeds),
        rho_exceeds,
        lambda_exceeds,
    }
}

/// Area averages of `rho_it` and `lambda_it` per modelled period.
pub fn summary_coefficients(coeffs: &LinkCoefficients) -> (Vec<f64>, Vec<f64>) {
    let n = coeffs.n_areas();
    let m = coeffs.n_modelled();
    let mean = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|t| (0..n).map(|i| v[i * m + t]).sum::<f64>() / n as f64)
            .collect()
    };
    (mean(&coeffs.rho), mean(&coeffs.lambda))
}

/// Largest intensity the samplers will draw from.
pub const MAX_SAMPLED_MEAN: f64 = 1e15;

/// Draws from NB(mu, psi) as a gamma mixture of Poissons.
pub fn sample_nb<R: Rng + ?Sized>(rng: &mut R, mu: f64, psi: f64) -> Result<u64> {
    if !(mu > 0.0) || mu > MAX_SAMPLED_MEAN {
        return Err(Error::domain(format!("cannot sample NB with mean {mu}")));
    }
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::domain(format!("cannot sample NB with dispersion {psi}")));
    }
    let gamma = Gamma::new(psi, mu / psi).map_err(|e| Error::domain(e.to_string()))?;
    let rate: f64 = gamma.sample(rng);
    if !(rate > 0.0) {
        return Ok(0);
    }
    let poisson = Poisson::new(rate.min(MAX_SAMPLED_MEAN)).map_err(|e| Error::domain(e.to_string()))?;
    let y: f64 = poisson.sample(rng);
    Ok(y as u64)
}
