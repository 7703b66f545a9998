//! Incremental evaluation of block updates.
//!
//! The engine keeps the per-area link components, the endemic term and the
//! per-cell intensity together with the `mu`-dependent part of the NB
//! log-likelihood. A block update recomputes only the cells its move can
//! change and only the prior terms that involve the moved coordinates. The
//! accept/reject rule and the random draws match [`super::update_block`], so
//! both paths produce the same chain up to rounding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::SpatialWeights;
use crate::model::{
    area_components, explosive_weight, ln_factorial, ln_rising, CarField, LatentState,
    ModelVariant, PanelData,
};
use crate::priors::{
    gamma_log_density, icar_with_rank, normal_log_density, omega_log_density, rw1_log_density,
    total_log_posterior, PriorConfig,
};

use super::blocks::{accept, apply_move, draw_pair, sync_block, Block, MoveContext};

/// Data-side quantities shared by every chain.
pub(crate) struct Problem<'a> {
    pub variant: ModelVariant,
    pub data: &'a PanelData,
    pub weights: &'a SpatialWeights,
    pub priors: PriorConfig,
    n_areas: usize,
    n_periods: usize,
    n_modelled: usize,
    /// Per modelled cell `i * (T - 1) + t - 1`.
    y: Vec<u64>,
    own: Vec<f64>,
    lag: Vec<f64>,
    /// Distinct counts with their multiplicities.
    count_hist: Vec<(u64, f64)>,
    ln_fact_sum: f64,
    rank: usize,
}

impl<'a> Problem<'a> {
    pub fn new(
        variant: ModelVariant,
        data: &'a PanelData,
        weights: &'a SpatialWeights,
        priors: PriorConfig,
    ) -> Result<Self> {
        if weights.n_areas() != data.n_areas() {
            return Err(Error::LengthMismatch {
                what: "spatial weights",
                expected: data.n_areas(),
                got: weights.n_areas(),
            });
        }
        priors.validate()?;
        let n = data.n_areas();
        let periods = data.n_periods();
        let m = periods - 1;
        let mut y = Vec::with_capacity(n * m);
        let mut own = Vec::with_capacity(n * m);
        let mut lag = Vec::with_capacity(n * m);
        for i in 0..n {
            for t in 1..periods {
                y.push(data.count(i, t));
                own.push(data.count(i, t - 1) as f64);
                lag.push(
                    weights
                        .row(i)
                        .iter()
                        .map(|&(j, w)| w * data.count(j, t - 1) as f64)
                        .sum(),
                );
            }
        }
        let mut sorted = y.clone();
        sorted.sort_unstable();
        let mut count_hist: Vec<(u64, f64)> = Vec::new();
        for v in sorted {
            match count_hist.last_mut() {
                Some((last, mult)) if *last == v => *mult += 1.0,
                _ => count_hist.push((v, 1.0)),
            }
        }
        let ln_fact_sum = count_hist.iter().map(|&(v, k)| k * ln_factorial(v)).sum();
        let rank = n - weights.components().count();
        Ok(Self {
            variant,
            data,
            weights,
            priors,
            n_areas: n,
            n_periods: periods,
            n_modelled: m,
            y,
            own,
            lag,
            count_hist,
            ln_fact_sum,
            rank,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn move_context(&self) -> MoveContext<'_> {
        MoveContext {
            kind: self.variant.kind,
            covariate: self.data.covariate(),
            components: self.weights.components(),
        }
    }

    pub fn log_posterior(&self, state: &LatentState) -> Result<f64> {
        total_log_posterior(state, &self.variant, self.weights, self.data, &self.priors)
            .map(|t| t.total)
    }

    /// `sum over cells of ln Γ(y + psi) - ln Γ(psi)`.
    fn rising_sum(&self, psi: f64) -> f64 {
        self.count_hist.iter().map(|&(v, k)| k * ln_rising(v, psi)).sum()
    }

    /// The part of the log-likelihood constant in `mu`.
    fn dispersion_constant(&self, psi: f64) -> f64 {
        self.rising_sum(psi) - self.ln_fact_sum
    }

    /// Which cached quantities each block can change.
    pub fn scope(&self, block: Block) -> Scope {
        let comps = self.weights.components();
        match block {
            Block::Alpha(_) | Block::Kappa(_) => Scope::Links,
            Block::Beta | Block::DeltaScale => Scope::Endemic,
            Block::CarScale(CarField::U) => Scope::Endemic,
            Block::CarScale(_) => Scope::Links,
            Block::LogPsi => Scope::Dispersion,
            Block::CarSite(CarField::U, i) => Scope::EndemicRow(i, 1, self.n_periods),
            // The intercept absorbs the recentring, so other components move.
            Block::CarSite(_, i) => {
                let label = comps.label(i);
                let areas = (0..self.n_areas)
                    .filter(|&j| j == i || comps.label(j) != label)
                    .collect();
                Scope::LinkAreas(areas)
            }
            Block::DeltaSite(_, 0) => Scope::Prior,
            Block::DeltaSite(i, t) => Scope::EndemicRow(i, t, t + 1),
            Block::DeltaSuffix(i, s) => Scope::EndemicRow(i, s.max(1), self.n_periods),
            Block::LogitOmega(t) => Scope::Period(t),
            Block::BetaRidge
            | Block::URidge(_)
            | Block::LogTau(_)
            | Block::LogDeltaPrecision
            | Block::LogQ1(_)
            | Block::LogQ2(_)
            | Block::LogQBoth(_) => Scope::Prior,
        }
    }

    /// Sum of the prior terms that involve the coordinates `block` moves.
    fn local_prior(&self, state: &LatentState, block: Block) -> Result<f64> {
        let cfg = &self.priors;
        let normal = |x: f64| normal_log_density(x, 0.0, cfg.normal_var_fixed);
        let gamma = |x: f64| gamma_log_density(x, cfg.gamma_shape, cfg.gamma_rate);
        let init = |x: f64| normal_log_density(x, 0.0, cfg.delta_init_var);
        let graph = self.weights.graph();
        let comps = self.weights.components();
        let icar = |f: CarField| -> Result<f64> {
            let tau = state.tau(f);
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(Error::domain("CAR precision out of range"));
            }
            Ok(icar_with_rank(state.car(f), graph, tau, self.rank))
        };
        let first_deltas = |i: usize| -> f64 {
            comps
                .members(comps.label(i))
                .iter()
                .map(|&j| init(state.delta(j, 0)))
                .sum()
        };
        let step = |a: f64, b: f64| normal_log_density(b, a, state.sigma2_delta);
        let kind = self.variant.kind;
        let value = match block {
            Block::Alpha(k) => normal(state.alpha[k]),
            Block::Kappa(k) => normal(state.kappa[k]),
            Block::Beta => normal(state.beta),
            Block::BetaRidge => {
                normal(state.beta) + (0..self.n_areas).map(|i| init(state.delta(i, 0))).sum::<f64>()
            }
            Block::LogPsi => gamma(state.psi)?,
            Block::LogTau(f) | Block::CarScale(f) => icar(f)? + gamma(state.tau(f))?,
            Block::CarSite(CarField::U, i) | Block::URidge(i) => icar(CarField::U)? + first_deltas(i),
            Block::CarSite(f, _) => {
                let mut v = icar(f)?;
                for k in 0..2 {
                    if kind.explosive_field(k) == Some(f) {
                        v += normal(state.alpha[k]);
                    }
                    if kind.stationary_field(k) == Some(f) {
                        v += normal(state.kappa[k]);
                    }
                }
                v
            }
            Block::DeltaSite(i, t) => {
                let row = state.delta_row(i);
                let mut v = if t == 0 { init(row[0]) } else { step(row[t - 1], row[t]) };
                if t + 1 < row.len() {
                    v += step(row[t], row[t + 1]);
                }
                v
            }
            Block::DeltaSuffix(i, s) => {
                let row = state.delta_row(i);
                if s == 0 {
                    init(row[0])
                } else {
                    step(row[s - 1], row[s])
                }
            }
            Block::LogDeltaPrecision | Block::DeltaScale => {
                let mut v = gamma(state.delta_precision())?;
                for i in 0..self.n_areas {
                    v += rw1_log_density(state.delta_row(i), state.sigma2_delta, cfg.delta_init_var)?;
                }
                v
            }
            Block::LogitOmega(t) => {
                omega_log_density(state.omega[t - 1], state.q1[t - 1], state.q2[t - 1])?
            }
            Block::LogQ1(t) | Block::LogQ2(t) | Block::LogQBoth(t) => {
                omega_log_density(state.omega[t - 1], state.q1[t - 1], state.q2[t - 1])?
                    + gamma(state.q1[t - 1])?
                    + gamma(state.q2[t - 1])?
            }
        };
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Scope {
    /// Likelihood unchanged.
    Prior,
    /// Link components and every cell.
    Links,
    /// Link components and cells of the listed areas.
    LinkAreas(Vec<usize>),
    /// Endemic term and every cell.
    Endemic,
    /// Endemic term and cells of one area over absolute periods `from..to`.
    EndemicRow(usize, usize, usize),
    /// Every area at one absolute period.
    Period(usize),
    /// Dispersion: every cell, plus the count-only constant.
    Dispersion,
}

#[derive(Debug, Clone)]
struct Cache {
    /// `[explosive_1, stationary_1, explosive_2, stationary_2]` per area.
    comp: [Vec<f64>; 4],
    endemic: Vec<f64>,
    mu: Vec<f64>,
    partial: Vec<f64>,
    dispersion_constant: f64,
}

/// `-psi ln(1 + mu/psi) - y ln(1 + psi/mu)`: the `mu`-dependent part of the
/// NB log-pmf, NaN when the intensity is not a valid mean.
fn partial_ll(y: u64, mu: f64, psi: f64) -> f64 {
    if !(mu > 0.0) || !mu.is_finite() {
        return f64::NAN;
    }
    let size = -psi * (mu / psi).ln_1p();
    if y == 0 {
        size
    } else {
        size - y as f64 * (psi / mu).ln_1p()
    }
}

pub(crate) struct Engine<'p, 'a> {
    problem: &'p Problem<'a>,
    pub cur: LatentState,
    prop: LatentState,
    cache: Cache,
    pcache: Cache,
}

impl<'p, 'a> Engine<'p, 'a> {
    pub fn new(problem: &'p Problem<'a>, state: LatentState) -> Result<Self> {
        let lp = problem.log_posterior(&state)?;
        if !lp.is_finite() {
            return Err(Error::Sampler("non-finite initial log-posterior".into()));
        }
        let n = problem.n_areas;
        let cells = n * problem.n_modelled;
        let cache = Cache {
            comp: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            endemic: vec![0.0; cells],
            mu: vec![0.0; cells],
            partial: vec![0.0; cells],
            dispersion_constant: 0.0,
        };
        let mut engine = Self {
            problem,
            prop: state.clone(),
            cur: state,
            pcache: cache.clone(),
            cache,
        };
        engine.refresh()?;
        Ok(engine)
    }

    /// Recomputes every cached quantity from the current state.
    pub fn refresh(&mut self) -> Result<()> {
        let p = self.problem;
        let all: Vec<usize> = (0..p.n_areas).collect();
        fill_links(p, &self.cur, &mut self.cache, &all);
        fill_endemic(p, &self.cur, &mut self.cache, 0..p.n_areas, 1, p.n_periods);
        self.cache.dispersion_constant = p.dispersion_constant(self.cur.psi);
        for i in 0..p.n_areas {
            for t in 1..p.n_periods {
                let c = i * p.n_modelled + t - 1;
                let mu = cell_mu(p, &self.cur, &self.cache, i, t);
                let part = partial_ll(p.y[c], mu, self.cur.psi);
                if !part.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "log-likelihood at area {i}, period {t}"
                    )));
                }
                self.cache.mu[c] = mu;
                self.cache.partial[c] = part;
            }
        }
        self.pcache.clone_from(&self.cache);
        self.prop.clone_from(&self.cur);
        Ok(())
    }

    /// Log-likelihood of the current state from the caches.
    pub fn cached_log_likelihood(&self) -> f64 {
        self.cache.dispersion_constant + self.cache.partial.iter().sum::<f64>()
    }

    /// One Metropolis-Hastings update. Returns whether it was accepted.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        block: Block,
        scope: &Scope,
        scale: f64,
        rng: &mut R,
    ) -> bool {
        let p = self.problem;
        let (z, u) = draw_pair(rng);
        let ctx = p.move_context();
        let jacobian = apply_move(&mut self.prop, block, scale * z, &ctx);
        let prior = match (p.local_prior(&self.prop, block), p.local_prior(&self.cur, block)) {
            (Ok(new), Ok(old)) => new - old,
            _ => f64::NAN,
        };
        let lik = if prior.is_nan() { f64::NAN } else { self.propose(scope) };
        let accepted = accept(prior + lik + jacobian, u);
        if accepted {
            self.commit(scope);
            sync_block(&mut self.cur, &self.prop, block);
        } else {
            self.revert(scope);
            sync_block(&mut self.prop, &self.cur, block);
        }
        accepted
    }

    /// Fills the proposal cache over `scope` and returns the likelihood change.
    fn propose(&mut self, scope: &Scope) -> f64 {
        let p = self.problem;
        let (state, cache, pc) = (&self.prop, &self.cache, &mut self.pcache);
        let m = p.n_modelled;
        let mut delta = 0.0;
        let mut cell = |pc: &mut Cache, i: usize, t: usize| {
            let c = i * m + t - 1;
            let mu = cell_mu(p, state, pc, i, t);
            let part = partial_ll(p.y[c], mu, state.psi);
            pc.mu[c] = mu;
            pc.partial[c] = part;
            delta += part - cache.partial[c];
        };
        match scope {
            Scope::Prior => return 0.0,
            Scope::Links => {
                let all: Vec<usize> = (0..p.n_areas).collect();
                fill_links(p, state, pc, &all);
                for i in 0..p.n_areas {
                    (1..p.n_periods).for_each(|t| cell(pc, i, t));
                }
            }
            Scope::LinkAreas(areas) => {
                fill_links(p, state, pc, areas);
                for &i in areas {
                    (1..p.n_periods).for_each(|t| cell(pc, i, t));
                }
            }
            Scope::Endemic => {
                fill_endemic(p, state, pc, 0..p.n_areas, 1, p.n_periods);
                for i in 0..p.n_areas {
                    (1..p.n_periods).for_each(|t| cell(pc, i, t));
                }
            }
            Scope::EndemicRow(i, from, to) => {
                fill_endemic(p, state, pc, *i..*i + 1, *from, *to);
                (*from..*to).for_each(|t| cell(pc, *i, t));
            }
            Scope::Period(t) => {
                (0..p.n_areas).for_each(|i| cell(pc, i, *t));
            }
            Scope::Dispersion => {
                for i in 0..p.n_areas {
                    (1..p.n_periods).for_each(|t| cell(pc, i, t));
                }
                pc.dispersion_constant = p.dispersion_constant(state.psi);
                delta += pc.dispersion_constant - cache.dispersion_constant;
            }
        }
        delta
    }

    fn commit(&mut self, scope: &Scope) {
        copy_scope(self.problem, &mut self.cache, &self.pcache, scope);
    }

    fn revert(&mut self, scope: &Scope) {
        copy_scope(self.problem, &mut self.pcache, &self.cache, scope);
    }
}

fn cell_mu(p: &Problem<'_>, state: &LatentState, cache: &Cache, i: usize, t: usize) -> f64 {
    let c = i * p.n_modelled + t - 1;
    let w = explosive_weight(p.variant.kind, state, t);
    let rho = w * cache.comp[0][i] + (1.0 - w) * cache.comp[1][i];
    let lambda = w * cache.comp[2][i] + (1.0 - w) * cache.comp[3][i];
    rho * p.own[c] + lambda * p.lag[c] + cache.endemic[c]
}

fn fill_links(p: &Problem<'_>, state: &LatentState, cache: &mut Cache, areas: &[usize]) {
    for &i in areas {
        for k in 0..2 {
            let (a, b) = area_components(&p.variant, state, k, i);
            cache.comp[2 * k][i] = a;
            cache.comp[2 * k + 1][i] = b;
        }
    }
}

fn fill_endemic(
    p: &Problem<'_>,
    state: &LatentState,
    cache: &mut Cache,
    areas: std::ops::Range<usize>,
    from: usize,
    to: usize,
) {
    let x = p.data.covariate();
    for i in areas {
        let eta = state.eta(x, i);
        for t in from..to {
            cache.endemic[i * p.n_modelled + t - 1] = (eta + state.delta(i, t)).exp();
        }
    }
}

fn copy_scope(p: &Problem<'_>, dst: &mut Cache, src: &Cache, scope: &Scope) {
    let m = p.n_modelled;
    let rows = |dst: &mut Cache, i: usize, from: usize, to: usize, endemic: bool| {
        let r = i * m + from - 1..i * m + to - 1;
        dst.mu[r.clone()].copy_from_slice(&src.mu[r.clone()]);
        dst.partial[r.clone()].copy_from_slice(&src.partial[r.clone()]);
        if endemic {
            dst.endemic[r.clone()].copy_from_slice(&src.endemic[r]);
        }
    };
    match scope {
        Scope::Prior => {}
        Scope::Links => {
            dst.comp.clone_from(&src.comp);
            dst.mu.copy_from_slice(&src.mu);
            dst.partial.copy_from_slice(&src.partial);
        }
        Scope::LinkAreas(areas) => {
            for &i in areas {
                for k in 0..4 {
                    dst.comp[k][i] = src.comp[k][i];
                }
                rows(dst, i, 1, p.n_periods, false);
            }
        }
        Scope::Endemic => {
            dst.endemic.copy_from_slice(&src.endemic);
            dst.mu.copy_from_slice(&src.mu);
            dst.partial.copy_from_slice(&src.partial);
        }
        Scope::EndemicRow(i, from, to) => rows(dst, *i, *from, *to, true),
        Scope::Period(t) => {
            for i in 0..p.n_areas {
                let c = i * m + t - 1;
                dst.mu[c] = src.mu[c];
                dst.partial[c] = src.partial[c];
            }
        }
        Scope::Dispersion => {
            dst.mu.copy_from_slice(&src.mu);
            dst.partial.copy_from_slice(&src.partial);
            dst.dispersion_constant = src.dispersion_constant;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, lattice_edges, row_standardize};
    use crate::model::{log_likelihood, ModelKind};
    use crate::sampler::blocks::{block_schedule, update_block};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn panel(n_periods: usize, seed: u64) -> (SpatialWeights, PanelData) {
        let g = build_graph(&lattice_edges(2, 3, false), 6).unwrap();
        let w = row_standardize(&g, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = (0..6 * n_periods).map(|_| rng.random_range(0..40u64)).collect();
        let x = (0..6).map(|i| 1.0 + 0.3 * i as f64).collect();
        (w, PanelData::new(6, n_periods, counts, x).unwrap())
    }

    #[test]
    fn cached_likelihood_matches_model() {
        for kind in ModelKind::ALL {
            let (w, data) = panel(5, 1);
            let v = ModelVariant::unit(kind);
            let problem = Problem::new(v, &data, &w, PriorConfig::default()).unwrap();
            let mut s = LatentState::new(kind, 6, 5);
            s.alpha = [-0.4, -0.9];
            s.delta.iter_mut().enumerate().for_each(|(k, d)| *d = 0.05 * k as f64);
            let engine = Engine::new(&problem, s.clone()).unwrap();
            let reference = log_likelihood(&s, &v, &w, &data).unwrap().total;
            assert!((engine.cached_log_likelihood() - reference).abs() < 1e-9);
        }
    }

    /// The incremental engine and the full-posterior reference update must
    /// walk the same chain from the same seed.
    #[test]
    fn fast_and_reference_paths_agree() {
        for kind in ModelKind::ALL {
            let (w, data) = panel(4, 2);
            let v = ModelVariant::unit(kind);
            let problem = Problem::new(v, &data, &w, PriorConfig::default()).unwrap();
            let mut start = LatentState::new(kind, 6, 4);
            start.alpha = [-0.5, -1.0];
            start.delta.iter_mut().for_each(|d| *d = 1.5);
            let blocks = block_schedule(kind, 4, w.components());
            let scopes: Vec<Scope> = blocks.iter().map(|&b| problem.scope(b)).collect();

            let mut engine = Engine::new(&problem, start.clone()).unwrap();
            let mut slow = start;
            let mut rng_fast = ChaCha8Rng::seed_from_u64(9);
            let mut rng_slow = ChaCha8Rng::seed_from_u64(9);
            let ctx = problem.move_context();
            let lp = |s: &LatentState| problem.log_posterior(s);
            let mut n_acc = 0;
            for _ in 0..30 {
                engine.refresh().unwrap();
                for (b, scope) in blocks.iter().zip(&scopes) {
                    let scale = b.initial_scale();
                    let fast = engine.step(*b, scope, scale, &mut rng_fast);
                    let reference = update_block(&mut slow, *b, &ctx, lp, &mut rng_slow, scale).unwrap();
                    assert_eq!(fast, reference, "{kind} {b}");
                    n_acc += fast as usize;
                }
            }
            assert!(n_acc > 100);
            let diff = engine
                .cur
                .delta
                .iter()
                .zip(&slow.delta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-9);
            assert!((engine.cur.psi - slow.psi).abs() < 1e-9 * slow.psi);
            assert!((engine.cur.alpha[0] - slow.alpha[0]).abs() < 1e-9);
            assert!((engine.cur.kappa[1] - slow.kappa[1]).abs() < 1e-9);
            assert_eq!(engine.cur.omega.len(), slow.omega.len());
            for (a, b) in engine.cur.omega.iter().zip(&slow.omega) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn caches_stay_consistent_after_rejections() {
        let kind = ModelKind::M4;
        let (w, data) = panel(4, 3);
        let v = ModelVariant::unit(kind);
        let problem = Problem::new(v, &data, &w, PriorConfig::default()).unwrap();
        let mut engine = Engine::new(&problem, LatentState::new(kind, 6, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for b in block_schedule(kind, 4, w.components()) {
            let scope = problem.scope(b);
            // very large steps: mostly rejections
            engine.step(b, &scope, 3.0, &mut rng);
        }
        let cached = engine.cached_log_likelihood();
        let fresh = log_likelihood(&engine.cur, &v, &w, &data).unwrap().total;
        assert!((cached - fresh).abs() < 1e-8);
        assert_eq!(engine.cur, engine.prop);
    }
}
