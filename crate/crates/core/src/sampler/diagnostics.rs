//! Convergence diagnostics and posterior summaries.

use serde::Serialize;

use crate::error::{Error, Result};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with denominator `n - 1`; zero for a single value.
fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

/// Potential scale reduction factor with the Brooks-Gelman degrees-of-freedom
/// correction, `sqrt((d + 3) / (d + 1) * V / W)`.
///
/// Identical constant chains give 1; constant but distinct chains give
/// infinity.
pub fn psrf(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::domain("PSRF needs at least two chains"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::domain("PSRF needs chains of equal length"));
    }
    if n < 10 {
        return Err(Error::domain("PSRF needs at least 10 draws per chain"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| variance(c)).collect();
    let w = mean(&vars);
    let b = nf * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v_hat = (nf - 1.0) / nf * w + (mf + 1.0) / (mf * nf) * b;
    let grand = mean(&means);
    let means_sq: Vec<f64> = means.iter().map(|x| x * x).collect();
    let var_v = ((nf - 1.0) / nf).powi(2) / mf * variance(&vars)
        + ((mf + 1.0) / (mf * nf)).powi(2) * 2.0 / (mf - 1.0) * b * b
        + 2.0 * (mf + 1.0) * (nf - 1.0) / (mf * nf * nf) * (nf / mf)
            * (covariance(&vars, &means_sq) - 2.0 * grand * covariance(&vars, &means));
    let correction = if var_v > 0.0 && var_v.is_finite() {
        let d = 2.0 * v_hat * v_hat / var_v;
        (d + 3.0) / (d + 1.0)
    } else {
        1.0
    };
    Ok((correction * v_hat / w).sqrt())
}

/// Quantile of sorted values by linear interpolation between order
/// statistics (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("draws"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        mean: mean(values),
        sd: variance(values).sqrt(),
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                shift + z
            })
            .collect()
    }

    #[test]
    fn identical_chains() {
        let c = normals(1, 1000, 0.0);
        let r = psrf(&[&c, &c]).unwrap();
        assert!((r - 1.0).abs() < 1e-3, "{r}");
        let k = vec![2.0; 50];
        assert_eq!(psrf(&[&k, &k]).unwrap(), 1.0);
        let k2 = vec![3.0; 50];
        assert!(psrf(&[&k, &k2]).unwrap().is_infinite());
    }

    #[test]
    fn same_distribution_near_one() {
        let (a, b) = (normals(2, 5000, 0.0), normals(3, 5000, 0.0));
        assert!(psrf(&[&a, &b]).unwrap() < 1.05);
    }

    #[test]
    fn separated_chains() {
        let (a, b) = (normals(4, 1000, 0.0), normals(5, 1000, 10.0));
        assert!(psrf(&[&a, &b]).unwrap() > 1.2);
    }

    #[test]
    fn psrf_errors() {
        let a = normals(6, 100, 0.0);
        assert!(psrf(&[&a]).is_err());
        assert!(psrf(&[&a[..5], &a[5..10]]).is_err());
        assert!(psrf(&[&a[..20], &a[..30]]).is_err());
    }

    #[test]
    fn psrf_matches_textbook_formula() {
        // Independent transcription of the corrected statistic with m = 3.
        let chains: Vec<Vec<f64>> = (0..3).map(|k| normals(10 + k, 200, 0.3 * k as f64)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let (m, n) = (3.0, 200.0);
        let xbar: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
        let s2: Vec<f64> = chains
            .iter()
            .zip(&xbar)
            .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
            .collect();
        let xx = xbar.iter().sum::<f64>() / m;
        let bn = xbar.iter().map(|x| (x - xx).powi(2)).sum::<f64>() / (m - 1.0);
        let bb = n * bn;
        let ww = s2.iter().sum::<f64>() / m;
        let v = (n - 1.0) / n * ww + (1.0 + 1.0 / m) * bn;
        let cov = |a: &[f64], b: &[f64]| {
            let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
            a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (m - 1.0)
        };
        let x2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
        let var_v = ((n - 1.0) / n).powi(2) / m * cov(&s2, &s2)
            + ((m + 1.0) / (m * n)).powi(2) * 2.0 / (m - 1.0) * bb * bb
            + 2.0 * (m + 1.0) * (n - 1.0) / (m * n * n) * n / m * (cov(&s2, &x2) - 2.0 * xx * cov(&s2, &xbar));
        let d = 2.0 * v * v / var_v;
        let expected = ((d + 3.0) / (d + 1.0) * v / ww).sqrt();
        assert!((psrf(&refs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn summary_edge_cases() {
        let s = summarize(&[4.5; 7]).unwrap();
        assert_eq!((s.mean, s.sd, s.q025, s.q50, s.q975), (4.5, 0.0, 4.5, 4.5, 4.5));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(summarize(&v).unwrap().q50, 50.5);
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_match_sorted_oracle(
            values in prop::collection::vec(-10f64..10.0, 1..200),
            p in 0.0f64..=1.0
        ) {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // oracle: walk to the bracketing pair explicitly
            let pos = p * (sorted.len() - 1) as f64;
            let mut k = 0;
            while k + 1 < sorted.len() && ((k + 1) as f64) <= pos {
                k += 1;
            }
            let frac = pos - k as f64;
            let expected = if k + 1 < sorted.len() {
                sorted[k] * (1.0 - frac) + sorted[k + 1] * frac
            } else {
                sorted[k]
            };
            prop_assert!((quantile_sorted(&sorted, p) - expected).abs() < 1e-12);
        }
    }
}
