//! Synthetic panels drawn from the generative model with known truth.
//!
//! Periods in a [`Scenario`] are labelled from 1, the same labels used in
//! the counts file: label 1 is the conditioning period and label `T + 1` is
//! the held-out period.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, lattice_edges, row_standardize, AdjacencyGraph, SpatialWeights};
use crate::model::{
    link_coefficients, sample_nb, LatentState, ModelKind, ModelVariant, PanelData,
    StationaryRange, MAX_SAMPLED_MEAN,
};

/// Population divisor applied before the covariate is centred.
pub const POPULATION_SCALE: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    /// Rook lattice with wrap-around in both directions.
    Torus { rows: usize, cols: usize },
    Lattice { rows: usize, cols: usize },
    Edges {
        n_areas: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<AdjacencyGraph> {
        match *self {
            GraphSpec::Torus { rows, cols } => build_graph(&lattice_edges(rows, cols, true), rows * cols),
            GraphSpec::Lattice { rows, cols } => build_graph(&lattice_edges(rows, cols, false), rows * cols),
            GraphSpec::Edges { n_areas, ref edges } => build_graph(edges, n_areas),
        }
    }
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Torus { rows: 4, cols: 5 }
    }
}

/// True parameter values and generation rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    pub alpha: [f64; 2],
    pub kappa: [f64; 2],
    pub beta: f64,
    pub psi: f64,
    /// Standard deviation of the random-walk increments.
    pub sigma_delta: f64,
    /// `delta` at the first period is drawn from `N(mean, sd^2)` per area.
    pub delta_init_mean: f64,
    pub delta_init_sd: f64,
    /// Precision of every ICAR field.
    pub car_tau: f64,
    pub omega_endemic: f64,
    pub omega_epidemic: f64,
    /// Inclusive period-label ranges that use `omega_epidemic`.
    pub windows: Vec<[usize; 2]>,
    /// Explicit weights for labels `2..=T + 1`; overrides the windows.
    pub omega: Option<Vec<f64>>,
    pub population_min: f64,
    pub population_max: f64,
    /// Mean of the first-period counts.
    pub initial_mean: f64,
}

impl Default for Truth {
    fn default() -> Self {
        Self {
            alpha: [1.15f64.ln(), 0.5f64.ln()],
            kappa: [logit(0.5), logit(0.38)],
            beta: 0.3,
            psi: 40.0,
            sigma_delta: 0.05,
            delta_init_mean: 1.75,
            delta_init_sd: 0.2,
            car_tau: 20.0,
            omega_endemic: 0.05,
            omega_epidemic: 0.95,
            windows: vec![[20, 26]],
            omega: None,
            population_min: 1e5,
            population_max: 3e5,
            initial_mean: 40.0,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Observed periods `T`, including the conditioning period.
    pub n_periods: usize,
    pub variant: ModelKind,
    pub range: StationaryRange,
    pub graph: GraphSpec,
    pub truth: Truth,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            n_periods: 40,
            variant: ModelKind::M4,
            range: StationaryRange::Unit,
            graph: GraphSpec::default(),
            truth: Truth::default(),
        }
    }
}

impl Scenario {
    pub fn model_variant(&self) -> Result<ModelVariant> {
        ModelVariant::new(self.variant, self.range)
    }

    /// True mixture weights for labels `2..=T + 1`.
    pub fn omega_schedule(&self) -> Result<Vec<f64>> {
        let t = &self.truth;
        let schedule = match &t.omega {
            Some(w) => {
                if w.len() != self.n_periods {
                    return Err(Error::LengthMismatch {
                        what: "omega schedule",
                        expected: self.n_periods,
                        got: w.len(),
                    });
                }
                w.clone()
            }
            None => (2..=self.n_periods + 1)
                .map(|label| {
                    let epidemic = t.windows.iter().any(|&[lo, hi]| lo <= label && label <= hi);
                    if epidemic {
                        t.omega_epidemic
                    } else {
                        t.omega_endemic
                    }
                })
                .collect(),
        };
        if schedule.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(Error::Config("mixture weights must lie in (0, 1)".into()));
        }
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.truth;
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        self.model_variant()?;
        if self.n_periods < 2 {
            return bad("n_periods must be at least 2");
        }
        if !(t.psi > 0.0) {
            return bad("truth.psi must be positive");
        }
        if !(t.sigma_delta > 0.0) || !(t.delta_init_sd >= 0.0) {
            return bad("truth.sigma_delta must be positive and delta_init_sd non-negative");
        }
        if !(t.car_tau > 0.0) {
            return bad("truth.car_tau must be positive");
        }
        if !(t.population_min > 0.0 && t.population_min <= t.population_max) {
            return bad("population range must be positive and ordered");
        }
        if !(t.initial_mean > 0.0) {
            return bad("truth.initial_mean must be positive");
        }
        if t.windows.iter().any(|&[lo, hi]| lo > hi) {
            return bad("epidemic windows must be ordered");
        }
        let finite = t.alpha.iter().chain(&t.kappa).chain([&t.beta, &t.delta_init_mean]);
        if finite.into_iter().any(|x| !x.is_finite()) {
            return bad("truth values must be finite");
        }
        if self.variant.is_mixture() {
            self.omega_schedule()?;
        }
        Ok(())
    }
}

/// Values at the held-out period.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutTruth {
    pub omega: Option<f64>,
    pub delta: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Observed panel with the final period attached as holdout.
    pub data: PanelData,
    /// Truth over the observed periods.
    pub truth: LatentState,
    pub holdout: HoldoutTruth,
    /// True intensities, area-major over observed periods; zero at period 0.
    pub mu: Vec<f64>,
    pub populations: Vec<f64>,
    pub graph: AdjacencyGraph,
    pub weights: SpatialWeights,
    pub area_ids: Vec<String>,
}

/// Zero-padded identifiers that sort in index order.
pub fn area_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("a{i:0width$}")).collect()
}

/// Draw from the ICAR prior with precision `tau`, centred on each component.
pub fn sample_icar<R: Rng + ?Sized>(graph: &AdjacencyGraph, tau: f64, rng: &mut R) -> Vec<f64> {
    let n = graph.n_areas();
    let mut laplacian = DMatrix::<f64>::zeros(n, n);
    for (i, j) in graph.edges() {
        laplacian[(i, i)] += 1.0;
        laplacian[(j, j)] += 1.0;
        laplacian[(i, j)] -= 1.0;
        laplacian[(j, i)] -= 1.0;
    }
    let eig = SymmetricEigen::new(laplacian);
    let mut field = vec![0.0; n];
    for (k, &value) in eig.eigenvalues.iter().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        if value <= 1e-9 {
            continue;
        }
        let scale = z / (tau * value).sqrt();
        for (i, f) in field.iter_mut().enumerate() {
            *f += scale * eig.eigenvectors[(i, k)];
        }
    }
    crate::graph::connected_components(graph).center(&mut field);
    field
}

pub fn simulate_panel(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let truth = &scenario.truth;
    let kind = scenario.variant;
    let variant = scenario.model_variant()?;
    let graph = scenario.graph.build()?;
    let weights = row_standardize(&graph, None)?;
    let n = graph.n_areas();
    let t_obs = scenario.n_periods;
    let t_all = t_obs + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let populations: Vec<f64> = (0..n)
        .map(|_| rng.random_range(truth.population_min..=truth.population_max))
        .collect();
    let covariate: Vec<f64> = populations.iter().map(|p| p / POPULATION_SCALE).collect();

    let mut state = LatentState::new(kind, n, t_all);
    state.alpha = if kind.uses_alpha() { truth.alpha } else { [0.0; 2] };
    state.kappa = if kind.uses_kappa() { truth.kappa } else { [0.0; 2] };
    state.beta = truth.beta;
    state.psi = truth.psi;
    state.sigma2_delta = truth.sigma_delta * truth.sigma_delta;
    for &field in kind.car_fields() {
        *state.car_mut(field) = sample_icar(&graph, truth.car_tau, &mut rng);
        *state.tau_mut(field) = truth.car_tau;
    }
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut level = truth.delta_init_mean + truth.delta_init_sd * z;
        state.delta[i * t_all] = level;
        for t in 1..t_all {
            let z: f64 = StandardNormal.sample(&mut rng);
            level += truth.sigma_delta * z;
            state.delta[i * t_all + t] = level;
        }
    }
    if kind.is_mixture() {
        state.omega = scenario.omega_schedule()?;
    }

    // Centre the covariate exactly as the panel will.
    let mean_x = covariate.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = covariate.iter().map(|x| x - mean_x).collect();
    let coeffs = link_coefficients(&variant, &state)?;

    let mut counts = vec![0u64; n * t_all];
    let mut mu = vec![0.0; n * t_all];
    for i in 0..n {
        counts[i * t_all] = sample_nb(&mut rng, truth.initial_mean, truth.psi)?;
    }
    for t in 1..t_all {
        for i in 0..n {
            let own = counts[i * t_all + t - 1] as f64;
            let lag: f64 = weights
                .row(i)
                .iter()
                .map(|&(j, w)| w * counts[j * t_all + t - 1] as f64)
                .sum();
            let endemic = (state.eta(&centred, i) + state.delta(i, t)).exp();
            let m = coeffs.rho(i, t) * own + coeffs.lambda(i, t) * lag + endemic;
            if !m.is_finite() || m > MAX_SAMPLED_MEAN {
                return Err(Error::domain(format!(
                    "intensity overflow at area {i}, period label {}; scenario too explosive",
                    t + 1
                )));
            }
            mu[i * t_all + t] = m;
        }
        for i in 0..n {
            counts[i * t_all + t] = sample_nb(&mut rng, mu[i * t_all + t], truth.psi)?;
        }
    }

    let observed: Vec<u64> = (0..n)
        .flat_map(|i| counts[i * t_all..i * t_all + t_obs].iter().copied())
        .collect();
    let holdout_counts: Vec<u64> = (0..n).map(|i| counts[i * t_all + t_obs]).collect();
    let data = PanelData::new(n, t_obs, observed, covariate)?.with_holdout(holdout_counts)?;

    let mut observed_state = LatentState::new(kind, n, t_obs);
    observed_state.alpha = state.alpha;
    observed_state.kappa = state.kappa;
    observed_state.car = state.car.clone();
    observed_state.tau = state.tau;
    observed_state.beta = state.beta;
    observed_state.psi = state.psi;
    observed_state.sigma2_delta = state.sigma2_delta;
    observed_state.delta = (0..n)
        .flat_map(|i| state.delta_row(i)[..t_obs].iter().copied())
        .collect();
    if kind.is_mixture() {
        observed_state.omega = state.omega[..t_obs - 1].to_vec();
    }

    let holdout = HoldoutTruth {
        omega: kind.is_mixture().then(|| state.omega[t_obs - 1]),
        delta: (0..n).map(|i| state.delta(i, t_obs)).collect(),
        mu: (0..n).map(|i| mu[i * t_all + t_obs]).collect(),
    };
    let mu_obs = (0..n)
        .flat_map(|i| mu[i * t_all..i * t_all + t_obs].iter().copied())
        .collect();

    Ok(Simulation {
        data,
        truth: observed_state,
        holdout,
        mu: mu_obs,
        populations,
        area_ids: area_ids(n),
        graph,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_scenario(kind: ModelKind, psi: f64) -> Scenario {
        let mut s = Scenario {
            variant: kind,
            n_periods: 30,
            ..Scenario::default()
        };
        s.truth.beta = 0.0;
        s.truth.psi = psi;
        s.truth.sigma_delta = 1e-9;
        s.truth.delta_init_mean = 0.0;
        s.truth.delta_init_sd = 0.0;
        s.truth.car_tau = 1e12;
        s
    }

    #[test]
    fn endemic_floor_gives_unit_mean() {
        let mut s = flat_scenario(ModelKind::M1, 5.0);
        s.truth.alpha = [-80.0, -80.0];
        s.n_periods = 400;
        let sim = simulate_panel(&s).unwrap();
        let cells: Vec<f64> = (0..20)
            .flat_map(|i| (1..400).map(move |t| (i, t)))
            .map(|(i, t)| sim.data.count(i, t) as f64)
            .collect();
        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
        let var = cells.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / cells.len() as f64;
        // NB(1, 5): variance 1.2
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        assert!((var - 1.2).abs() < 0.08, "{var}");
        for &m in sim.mu.iter().filter(|&&m| m > 0.0) {
            assert!((m - 1.0).abs() < 1e-4, "{m}");
        }
    }

    #[test]
    fn deterministic_growth_matches_recursion() {
        let mut s = flat_scenario(ModelKind::M1, 1e6);
        s.graph = GraphSpec::Edges {
            n_areas: 2,
            edges: vec![],
        };
        s.n_periods = 12;
        s.truth.alpha = [1.2f64.ln(), 0.0];
        s.truth.delta_init_mean = -60.0;
        s.truth.initial_mean = 1e6;
        let sim = simulate_panel(&s).unwrap();
        for i in 0..2 {
            let y = sim.data.area_counts(i);
            for t in 1..12 {
                let ratio = y[t] as f64 / y[t - 1] as f64;
                assert!((ratio - 1.2).abs() < 0.02, "period {t}: {ratio}");
                let mu = sim.mu[i * 12 + t];
                assert!((mu - 1.2 * y[t - 1] as f64).abs() < 1e-6 * y[t - 1] as f64);
            }
        }
    }

    #[test]
    fn scripted_window_shows_in_growth_ratios() {
        let sim = simulate_panel(&Scenario::default()).unwrap();
        let totals = sim.data.totals();
        for t in 1..totals.len() {
            let ratio = totals[t] as f64 / totals[t - 1] as f64;
            let label = t + 1;
            if (20..=26).contains(&label) {
                assert!(ratio > 1.3, "label {label}: {ratio}");
            } else {
                assert!((0.8..=1.2).contains(&ratio), "label {label}: {ratio}");
            }
        }
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let a = simulate_panel(&Scenario::default()).unwrap();
        let b = simulate_panel(&Scenario::default()).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.mu, b.mu);
        let c = simulate_panel(&Scenario { seed: 2, ..Scenario::default() }).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn truth_is_a_valid_state() {
        for kind in ModelKind::ALL {
            let s = Scenario {
                variant: kind,
                ..Scenario::default()
            };
            let sim = simulate_panel(&s).unwrap();
            sim.truth.validate(kind).unwrap();
            assert_eq!(sim.truth.n_periods(), 40);
            assert_eq!(sim.data.holdout().unwrap().len(), 20);
            for &f in kind.car_fields() {
                assert!(sim.truth.car(f).iter().sum::<f64>().abs() < 1e-9);
            }
            assert_eq!(sim.holdout.omega.is_some(), kind.is_mixture());
        }
    }

    #[test]
    fn icar_draws_have_the_prior_spread() {
        // E[f' L f] = rank / tau for an ICAR draw.
        let graph = GraphSpec::default().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reps = 4000;
        let mut total = 0.0;
        for _ in 0..reps {
            let f = sample_icar(&graph, 4.0, &mut rng);
            total += crate::priors::icar_quadratic(&f, &graph);
        }
        let expected = 19.0 / 4.0;
        assert!((total / reps as f64 / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn schedule_and_validation() {
        let s = Scenario::default();
        let w = s.omega_schedule().unwrap();
        assert_eq!(w.len(), 40);
        assert_eq!(w[18], 0.95); // label 20
        assert_eq!(w[17], 0.05);
        assert_eq!(w[24], 0.95); // label 26
        assert_eq!(w[25], 0.05);
        let mut bad = s.clone();
        bad.truth.omega = Some(vec![0.5; 3]);
        assert!(simulate_panel(&bad).is_err());
        let mut bad = s.clone();
        bad.truth.omega_epidemic = 1.0;
        assert!(simulate_panel(&bad).is_err());
        let mut boom = s;
        boom.truth.alpha = [3.0, 3.0];
        boom.truth.windows = vec![[2, 41]];
        assert!(simulate_panel(&boom).is_err());
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let s = Scenario::default();
        let text = toml::to_string(&s).unwrap();
        assert!(text.contains("[truth]"));
        let back: Scenario = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
        let partial: Scenario = toml::from_str("seed = 5\n[graph]\nkind = \"lattice\"\nrows = 2\ncols = 3\n[truth]\npsi = 12.0\n").unwrap();
        assert_eq!(partial.truth.psi, 12.0);
        assert_eq!(partial.graph, GraphSpec::Lattice { rows: 2, cols: 3 });
        assert_eq!(partial.n_periods, 40);
    }

    #[test]
    fn area_ids_sort_in_index_order() {
        let ids = area_ids(120);
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(area_ids(3), vec!["a00", "a01", "a02"]);
    }
}
