//! Prior log-densities and the unnormalised log-posterior.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{connected_components, AdjacencyGraph, SpatialWeights};
use crate::model::{log_likelihood, CarField, LatentState, ModelVariant};

/// Hyperparameters shared by every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Gamma shape for precisions, `q1t`, `q2t` and the NB dispersion.
    pub gamma_shape: f64,
    /// Gamma rate for the same parameters.
    pub gamma_rate: f64,
    /// Variance of the normal prior on intercepts and `beta`.
    pub normal_var_fixed: f64,
    /// Variance of the normal prior on the first-period `delta_i1`.
    pub delta_init_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            gamma_shape: 1.0,
            gamma_rate: 0.01,
            normal_var_fixed: 100.0,
            delta_init_var: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gamma_shape,
            self.gamma_rate,
            self.normal_var_fixed,
            self.delta_init_var,
        ];
        if all.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("prior hyperparameters must be positive".into()))
        }
    }
}

pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * d * d / var
}

/// Gamma density with shape/rate parameterisation.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma variate must be positive, got {x}")));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// `sum over edges (f_i - f_j)^2`, each undirected edge once.
pub fn icar_quadratic(f: &[f64], graph: &AdjacencyGraph) -> f64 {
    graph
        .edges()
        .map(|(i, j)| {
            let d = f[i] - f[j];
            d * d
        })
        .sum()
}

/// Intrinsic CAR log-density up to a constant:
/// `-(tau/2) sum_{i~j} (f_i - f_j)^2 + ((N - components)/2) ln tau`.
pub fn icar_log_density(f: &[f64], graph: &AdjacencyGraph, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!("ICAR precision must be positive, got {tau}")));
    }
    if f.len() != graph.n_areas() {
        return Err(Error::LengthMismatch {
            what: "CAR field",
            expected: graph.n_areas(),
            got: f.len(),
        });
    }
    let rank = graph.n_areas() - connected_components(graph).count();
    Ok(icar_with_rank(f, graph, tau, rank))
}

pub(crate) fn icar_with_rank(f: &[f64], graph: &AdjacencyGraph, tau: f64, rank: usize) -> f64 {
    -0.5 * tau * icar_quadratic(f, graph) + 0.5 * rank as f64 * tau.ln()
}

/// First-order random walk: `delta_1 ~ N(0, init_var)`, then
/// `delta_t ~ N(delta_{t-1}, sigma2)`.
pub fn rw1_log_density(delta: &[f64], sigma2: f64, init_var: f64) -> Result<f64> {
    if delta.is_empty() {
        return Err(Error::Empty("random-walk path"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::domain(format!(
            "random-walk variance must be positive, got {sigma2}"
        )));
    }
    let steps: f64 = delta
        .windows(2)
        .map(|w| normal_log_density(w[1], w[0], sigma2))
        .sum();
    Ok(normal_log_density(delta[0], 0.0, init_var) + steps)
}

/// Beta(q1, q2) log-density at `omega`, including the normaliser.
pub fn omega_log_density(omega: f64, q1: f64, q2: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::domain(format!(
            "mixture weight must lie strictly inside (0, 1), got {omega}"
        )));
    }
    if !(q1 > 0.0 && q2 > 0.0) {
        return Err(Error::domain("beta parameters must be positive"));
    }
    Ok(ln_gamma(q1 + q2) - ln_gamma(q1) - ln_gamma(q2)
        + (q1 - 1.0) * omega.ln()
        + (q2 - 1.0) * (-omega).ln_1p())
}

/// Named additive pieces of the log-posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorBlock {
    Intercepts,
    Beta,
    Car(CarField),
    CarPrecision(CarField),
    Delta,
    DeltaPrecision,
    Omega,
    OmegaHyper,
    Dispersion,
}

impl fmt::Display for PriorBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorBlock::Intercepts => f.write_str("intercepts"),
            PriorBlock::Beta => f.write_str("beta"),
            PriorBlock::Car(c) => write!(f, "car:{}", c.name()),
            PriorBlock::CarPrecision(c) => write!(f, "tau:{}", c.name()),
            PriorBlock::Delta => f.write_str("delta"),
            PriorBlock::DeltaPrecision => f.write_str("delta_precision"),
            PriorBlock::Omega => f.write_str("omega"),
            PriorBlock::OmegaHyper => f.write_str("omega_hyper"),
            PriorBlock::Dispersion => f.write_str("psi"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTerms {
    pub log_likelihood: f64,
    pub priors: Vec<(PriorBlock, f64)>,
    pub total: f64,
}

impl PosteriorTerms {
    pub fn prior(&self, block: PriorBlock) -> Option<f64> {
        self.priors.iter().find(|(b, _)| *b == block).map(|&(_, v)| v)
    }
}

/// Prior blocks only; the likelihood is added by [`total_log_posterior`].
pub fn log_prior_terms(
    state: &LatentState,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    config: &PriorConfig,
) -> Result<Vec<(PriorBlock, f64)>> {
    let kind = variant.kind;
    let graph = weights.graph();
    let rank = graph.n_areas() - weights.components().count();
    let normal = |x: f64| normal_log_density(x, 0.0, config.normal_var_fixed);
    let gamma = |x: f64| gamma_log_density(x, config.gamma_shape, config.gamma_rate);
    let mut out = Vec::new();

    let mut intercepts = 0.0;
    if kind.uses_alpha() {
        intercepts += state.alpha.iter().map(|&a| normal(a)).sum::<f64>();
    }
    if kind.uses_kappa() {
        intercepts += state.kappa.iter().map(|&k| normal(k)).sum::<f64>();
    }
    out.push((PriorBlock::Intercepts, intercepts));
    out.push((PriorBlock::Beta, normal(state.beta)));

    for &field in kind.car_fields() {
        let tau = state.tau(field);
        if !(tau > 0.0) {
            return Err(Error::domain(format!("precision for {} must be positive", field.name())));
        }
        out.push((
            PriorBlock::Car(field),
            icar_with_rank(state.car(field), graph, tau, rank),
        ));
        out.push((PriorBlock::CarPrecision(field), gamma(tau)?));
    }

    let mut delta = 0.0;
    for i in 0..state.n_areas() {
        delta += rw1_log_density(state.delta_row(i), state.sigma2_delta, config.delta_init_var)?;
    }
    out.push((PriorBlock::Delta, delta));
    out.push((PriorBlock::DeltaPrecision, gamma(state.delta_precision())?));

    if kind.is_mixture() {
        let mut omega = 0.0;
        let mut hyper = 0.0;
        for t in 0..state.omega.len() {
            omega += omega_log_density(state.omega[t], state.q1[t], state.q2[t])?;
            hyper += gamma(state.q1[t])? + gamma(state.q2[t])?;
        }
        out.push((PriorBlock::Omega, omega));
        out.push((PriorBlock::OmegaHyper, hyper));
    }
    out.push((PriorBlock::Dispersion, gamma(state.psi)?));

    if let Some((block, _)) = out.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("prior block {block}")));
    }
    Ok(out)
}

/// Log-likelihood plus every prior block of the variant.
pub fn total_log_posterior(
    state: &LatentState,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    data: &crate::model::PanelData,
    config: &PriorConfig,
) -> Result<PosteriorTerms> {
    state.validate(variant.kind)?;
    let ll = log_likelihood(state, variant, weights, data)?.total;
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    let priors = log_prior_terms(state, variant, weights, config)?;
    let total = ll + priors.iter().map(|&(_, v)| v).sum::<f64>();
    Ok(PosteriorTerms {
        log_likelihood: ll,
        priors,
        total,
    })
}
