//! Posterior summaries of derived quantities: autoregressive coefficients,
//! their exceedance probabilities and counts of locally explosive areas.

use crate::error::{Error, Result};
use crate::model::{exceedance_stats, link_coefficients, summary_coefficients};
use crate::sampler::PosteriorSamples;

/// Posterior means over retained draws. Per-cell vectors are area-major over
/// modelled periods (`[i * (T - 1) + t - 1]`); per-period vectors are indexed
/// by `t - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub n_areas: usize,
    pub n_modelled: usize,
    pub rho_mean: Vec<f64>,
    pub lambda_mean: Vec<f64>,
    /// `P(rho_it > 1)`.
    pub rho_exceed: Vec<f64>,
    pub lambda_exceed: Vec<f64>,
    /// Posterior mean number of areas with `rho_it > 1` (`R_t^x`).
    pub rx_mean: Vec<f64>,
    /// Same for `lambda_it` (`L_t^x`).
    pub lx_mean: Vec<f64>,
    /// Area-averaged coefficients.
    pub rho_bar: Vec<f64>,
    pub lambda_bar: Vec<f64>,
}

pub fn coefficient_summary(samples: &PosteriorSamples) -> Result<CoefficientSummary> {
    let n = samples.layout().n_areas();
    let m = samples.layout().n_periods() - 1;
    let cells = n * m;
    let mut s = CoefficientSummary {
        n_areas: n,
        n_modelled: m,
        rho_mean: vec![0.0; cells],
        lambda_mean: vec![0.0; cells],
        rho_exceed: vec![0.0; cells],
        lambda_exceed: vec![0.0; cells],
        rx_mean: vec![0.0; m],
        lx_mean: vec![0.0; m],
        rho_bar: vec![0.0; m],
        lambda_bar: vec![0.0; m],
    };
    let variant = *samples.variant();
    let mut n_draws = 0usize;
    for state in samples.states() {
        let c = link_coefficients(&variant, &state)?;
        let e = exceedance_stats(&c);
        let (rb, lb) = summary_coefficients(&c);
        for k in 0..cells {
            s.rho_mean[k] += c.rho_values()[k];
            s.lambda_mean[k] += c.lambda_values()[k];
            s.rho_exceed[k] += e.rho_exceeds[k] as u8 as f64;
            s.lambda_exceed[k] += e.lambda_exceeds[k] as u8 as f64;
        }
        for t in 0..m {
            s.rx_mean[t] += e.rho_total[t] as f64;
            s.lx_mean[t] += e.lambda_total[t] as f64;
            s.rho_bar[t] += rb[t];
            s.lambda_bar[t] += lb[t];
        }
        n_draws += 1;
    }
    if n_draws == 0 {
        return Err(Error::Empty("posterior draws"));
    }
    let inv = 1.0 / n_draws as f64;
    for v in [
        &mut s.rho_mean,
        &mut s.lambda_mean,
        &mut s.rho_exceed,
        &mut s.lambda_exceed,
        &mut s.rx_mean,
        &mut s.lx_mean,
        &mut s.rho_bar,
        &mut s.lambda_bar,
    ] {
        v.iter_mut().for_each(|x| *x *= inv);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatentState, ModelKind, ModelVariant};
    use crate::sampler::{AcceptanceLedger, ParamLayout};

    #[test]
    fn averages_over_two_states() {
        let kind = ModelKind::M3;
        let layout = ParamLayout::new(kind, 2, 3);
        let mut a = LatentState::new(kind, 2, 3);
        a.alpha = [0.5, -3.0];
        a.kappa = [0.0, 0.0];
        a.omega = vec![0.9, 0.1];
        let mut b = a.clone();
        b.alpha = [-3.0, -3.0];
        let mut chain = layout.flatten(&a);
        chain.extend(layout.flatten(&b));
        let samples =
            PosteriorSamples::from_parts(ModelVariant::unit(kind), layout, vec![chain], AcceptanceLedger::default())
                .unwrap();
        let s = coefficient_summary(&samples).unwrap();
        // state a at period 1: 0.9 e^0.5 + 0.1 * 0.5 > 1; state b below
        let ra = 0.9 * 0.5f64.exp() + 0.05;
        let rb = 0.9 * (-3.0f64).exp() + 0.05;
        assert!((s.rho_mean[0] - (ra + rb) / 2.0).abs() < 1e-12);
        assert_eq!(s.rho_exceed[0], 0.5);
        assert_eq!(s.rx_mean[0], 1.0);
        assert_eq!(s.rx_mean[1], 0.0);
        assert_eq!(s.lx_mean, vec![0.0, 0.0]);
        assert!((s.rho_bar[0] - s.rho_mean[0]).abs() < 1e-12);
    }
}
