//! Robbins-Monro tuning of proposal scales during burn-in.

/// Gain for adaptation round `round` (1-based): `min(1, round^-1/2)`.
pub fn adaptation_gain(round: usize) -> f64 {
    (1.0 / (round.max(1) as f64).sqrt()).min(1.0)
}

/// Nudges each log-scale toward the target acceptance rate:
/// `log s' = log s + gain(round) (rate - target)`.
pub fn adapt_scales(scales: &[f64], rates: &[f64], round: usize, target: f64) -> Vec<f64> {
    let gain = adaptation_gain(round);
    scales
        .iter()
        .zip(rates)
        .map(|(&s, &r)| s * (gain * (r - target)).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_and_fixed_point() {
        let s = adapt_scales(&[0.5, 0.5, 0.5], &[1.0, 0.0, 0.44], 4, 0.44);
        assert!(s[0] > 0.5);
        assert!(s[1] < 0.5);
        assert!((s[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gain_decays() {
        assert_eq!(adaptation_gain(1), 1.0);
        assert_eq!(adaptation_gain(0), 1.0);
        assert!((adaptation_gain(100) - 0.1).abs() < 1e-15);
        let early = adapt_scales(&[1.0], &[1.0], 1, 0.44)[0];
        let late = adapt_scales(&[1.0], &[1.0], 400, 0.44)[0];
        assert!(early > late && late > 1.0);
    }
}
