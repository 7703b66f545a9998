//! Adaptive random-walk Metropolis-within-Gibbs sampling.
//!
//! ```
//! use epimix::graph::{build_graph, row_standardize};
//! use epimix::model::{ModelKind, ModelVariant, PanelData};
//! use epimix::priors::PriorConfig;
//! use epimix::sampler::{run, SamplerConfig};
//!
//! let graph = build_graph(&[(0, 1)], 2).unwrap();
//! let weights = row_standardize(&graph, None).unwrap();
//! let data = PanelData::new(2, 4, vec![3, 4, 6, 5, 2, 3, 3, 4], vec![1.0, 2.0]).unwrap();
//! let config = SamplerConfig { n_iterations: 200, n_burnin: 100, ..SamplerConfig::default() };
//! let samples = run(&data, &ModelVariant::unit(ModelKind::M1), &weights, &PriorConfig::default(), &config).unwrap();
//! assert_eq!(samples.n_draws(), 100);
//! ```

mod adapt;
mod blocks;
mod diagnostics;
mod engine;

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialWeights;
use crate::model::{LatentState, ModelKind, ModelVariant, PanelData};
use crate::priors::PriorConfig;

pub use adapt::{adapt_scales, adaptation_gain};
pub use blocks::{apply_move, block_schedule, update_block, Block, BlockFamily, MoveContext};
pub use diagnostics::{psrf, quantile_sorted, summarize, Summary};

use engine::{Engine, Problem, Scope};

const INIT_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sweeps per adaptation round during burn-in.
    pub adapt_window: usize,
    /// Target acceptance for one-dimensional blocks.
    pub target_accept: f64,
    /// Target acceptance for multivariate blocks.
    pub target_accept_block: f64,
    /// Standard deviation of the per-chain jitter on scalar starting values.
    pub init_jitter: f64,
    /// Worker threads for chains; `None` runs every chain at once. Does not
    /// affect results.
    pub threads: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iterations: 20_000,
            n_burnin: 10_000,
            thin: 1,
            seed: 1,
            adapt_window: 50,
            target_accept: 0.44,
            target_accept_block: 0.234,
            init_jitter: 0.1,
            threads: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.n_burnin >= self.n_iterations {
            return bad("n_burnin must be smaller than n_iterations");
        }
        if self.thin == 0 || self.adapt_window == 0 {
            return bad("thin and adapt_window must be positive");
        }
        for t in [self.target_accept, self.target_accept_block] {
            if !(t > 0.0 && t < 1.0) {
                return bad("acceptance targets must lie in (0, 1)");
            }
        }
        if !(self.init_jitter >= 0.0) {
            return bad("init_jitter must be non-negative");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn n_retained(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }
}

/// Names and positions of every sampled quantity in a flattened draw.
///
/// Order: `alpha1, alpha2` (log-link variants), `kappa1, kappa2`
/// (logit-link variants), `beta, psi, sigma2_delta`, `tau_<field>` per CAR
/// field, `<field>[i]`, `delta[i,t]`, then `omega[t], q1[t], q2[t]` for
/// mixture variants. Indices are zero-based; `t` is the absolute period.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    kind: ModelKind,
    n_areas: usize,
    n_periods: usize,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ParamLayout {
    pub fn new(kind: ModelKind, n_areas: usize, n_periods: usize) -> Self {
        let mut names = Vec::new();
        if kind.uses_alpha() {
            names.extend(["alpha1".to_string(), "alpha2".to_string()]);
        }
        if kind.uses_kappa() {
            names.extend(["kappa1".to_string(), "kappa2".to_string()]);
        }
        names.extend(["beta", "psi", "sigma2_delta"].map(String::from));
        for f in kind.car_fields() {
            names.push(format!("tau_{}", f.name()));
        }
        for f in kind.car_fields() {
            names.extend((0..n_areas).map(|i| format!("{}[{i}]", f.name())));
        }
        for i in 0..n_areas {
            names.extend((0..n_periods).map(|t| format!("delta[{i},{t}]")));
        }
        if kind.is_mixture() {
            for prefix in ["omega", "q1", "q2"] {
                names.extend((1..n_periods).map(|t| format!("{prefix}[{t}]")));
            }
        }
        let index = names.iter().enumerate().map(|(k, n)| (n.clone(), k)).collect();
        Self {
            kind,
            n_areas,
            n_periods,
            names,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Appends the state's values in layout order.
    pub fn flatten_into(&self, state: &LatentState, out: &mut Vec<f64>) {
        let kind = self.kind;
        if kind.uses_alpha() {
            out.extend_from_slice(&state.alpha);
        }
        if kind.uses_kappa() {
            out.extend_from_slice(&state.kappa);
        }
        out.extend([state.beta, state.psi, state.sigma2_delta]);
        out.extend(kind.car_fields().iter().map(|&f| state.tau(f)));
        for &f in kind.car_fields() {
            out.extend_from_slice(state.car(f));
        }
        out.extend_from_slice(&state.delta);
        if kind.is_mixture() {
            out.extend_from_slice(&state.omega);
            out.extend_from_slice(&state.q1);
            out.extend_from_slice(&state.q2);
        }
    }

    pub fn flatten(&self, state: &LatentState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.flatten_into(state, &mut out);
        out
    }

    /// Rebuilds a state from a flattened draw.
    pub fn unflatten(&self, values: &[f64]) -> Result<LatentState> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "flattened draw",
                expected: self.len(),
                got: values.len(),
            });
        }
        let kind = self.kind;
        let (n, t) = (self.n_areas, self.n_periods);
        let mut s = LatentState::new(kind, n, t);
        let mut it = values.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        if kind.uses_alpha() {
            let v = take(2);
            s.alpha = [v[0], v[1]];
        }
        if kind.uses_kappa() {
            let v = take(2);
            s.kappa = [v[0], v[1]];
        }
        let v = take(3);
        (s.beta, s.psi, s.sigma2_delta) = (v[0], v[1], v[2]);
        let taus = take(kind.car_fields().len());
        for (&f, tau) in kind.car_fields().iter().zip(taus) {
            *s.tau_mut(f) = tau;
        }
        for &f in kind.car_fields() {
            *s.car_mut(f) = take(n);
        }
        s.delta = take(n * t);
        if kind.is_mixture() {
            s.omega = take(t - 1);
            s.q1 = take(t - 1);
            s.q2 = take(t - 1);
        }
        Ok(s)
    }

    pub fn delta_index(&self, area: usize, period: usize) -> usize {
        self.index[&format!("delta[{area},{period}]")]
    }
}

/// Post-burn-in acceptance counts per block family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceLedger {
    counts: BTreeMap<BlockFamily, (u64, u64)>,
}

impl AcceptanceLedger {
    pub fn record(&mut self, family: BlockFamily, accepted: bool) {
        let e = self.counts.entry(family).or_insert((0, 0));
        e.0 += accepted as u64;
        e.1 += 1;
    }

    /// Adds `accepted` out of `attempted` proposals in one go.
    pub fn add(&mut self, family: BlockFamily, accepted: u64, attempted: u64) {
        let e = self.counts.entry(family).or_insert((0, 0));
        e.0 += accepted;
        e.1 += attempted;
    }

    pub fn merge(&mut self, other: &AcceptanceLedger) {
        for (&f, &(a, n)) in &other.counts {
            let e = self.counts.entry(f).or_insert((0, 0));
            e.0 += a;
            e.1 += n;
        }
    }

    /// `(family, accepted, attempted)` in family order.
    pub fn entries(&self) -> impl Iterator<Item = (BlockFamily, u64, u64)> + '_ {
        self.counts.iter().map(|(&f, &(a, n))| (f, a, n))
    }

    pub fn rate(&self, family: BlockFamily) -> Option<f64> {
        self.counts
            .get(&family)
            .filter(|(_, n)| *n > 0)
            .map(|&(a, n)| a as f64 / n as f64)
    }
}

/// Retained draws of every chain, flattened by a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    variant: ModelVariant,
    layout: ParamLayout,
    n_draws: usize,
    /// Per chain, `n_draws` rows of `layout.len()` values.
    chains: Vec<Vec<f64>>,
    acceptance: AcceptanceLedger,
}

impl PosteriorSamples {
    pub fn from_parts(
        variant: ModelVariant,
        layout: ParamLayout,
        chains: Vec<Vec<f64>>,
        acceptance: AcceptanceLedger,
    ) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::Empty("chains"));
        }
        if layout.kind() != variant.kind {
            return Err(Error::VariantMismatch {
                variant: variant.to_string(),
                missing: "matching parameter layout",
            });
        }
        let p = layout.len();
        let n_draws = chains[0].len() / p;
        if n_draws == 0 || chains.iter().any(|c| c.len() != n_draws * p) {
            return Err(Error::domain("chains must hold equal, whole numbers of draws"));
        }
        Ok(Self {
            variant,
            layout,
            n_draws,
            chains,
            acceptance,
        })
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn total_draws(&self) -> usize {
        self.n_draws * self.chains.len()
    }

    pub fn acceptance(&self) -> &AcceptanceLedger {
        &self.acceptance
    }

    pub fn chain_values(&self, chain: usize) -> &[f64] {
        &self.chains[chain]
    }

    pub fn draw(&self, chain: usize, k: usize) -> &[f64] {
        let p = self.layout.len();
        &self.chains[chain][k * p..(k + 1) * p]
    }

    pub fn state(&self, chain: usize, k: usize) -> LatentState {
        self.layout
            .unflatten(self.draw(chain, k))
            .expect("stored draws match their layout")
    }

    /// Every retained draw, chain-major.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let p = self.layout.len();
        self.chains.iter().flat_map(move |c| c.chunks_exact(p))
    }

    pub fn states(&self) -> impl Iterator<Item = LatentState> + '_ {
        self.draws()
            .map(|d| self.layout.unflatten(d).expect("stored draws match their layout"))
    }

    pub fn trace(&self, chain: usize, param: usize) -> Vec<f64> {
        let p = self.layout.len();
        self.chains[chain].iter().skip(param).step_by(p).copied().collect()
    }

    /// Draws of one parameter pooled across chains.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        (0..self.n_chains()).flat_map(|c| self.trace(c, param)).collect()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.layout.index_of(name).map(|k| self.pooled(k))
    }

    /// PSRF of one parameter; `None` with a single chain or too few draws.
    pub fn psrf(&self, param: usize) -> Option<f64> {
        let traces: Vec<Vec<f64>> = (0..self.n_chains()).map(|c| self.trace(c, param)).collect();
        let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
        psrf(&refs).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Pooled summaries of every parameter whose name passes `select`.
pub fn posterior_summary(
    samples: &PosteriorSamples,
    select: impl Fn(&str) -> bool,
) -> Result<Vec<ParamSummary>> {
    let out: Vec<ParamSummary> = samples
        .layout()
        .names()
        .iter()
        .enumerate()
        .filter(|(_, n)| select(n))
        .map(|(k, n)| {
            Ok(ParamSummary {
                name: n.clone(),
                summary: summarize(&samples.pooled(k))?,
            })
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Empty("parameter selection"));
    }
    Ok(out)
}

/// Configured sampler run. [`run`] covers the common case; the builder also
/// takes explicit starting states and a restriction of the updated blocks.
pub struct Sampler<'a> {
    problem: Problem<'a>,
    config: SamplerConfig,
    initial: Option<Vec<LatentState>>,
    filter: Option<Box<dyn Fn(Block) -> bool + Sync + 'a>>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a PanelData,
        variant: &ModelVariant,
        weights: &'a SpatialWeights,
        priors: &PriorConfig,
        config: &SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            problem: Problem::new(*variant, data, weights, *priors)?,
            config: config.clone(),
            initial: None,
            filter: None,
        })
    }

    /// Starts every chain from `state` exactly (no jitter).
    pub fn with_initial(mut self, state: LatentState) -> Self {
        self.initial = Some(vec![state; self.config.n_chains]);
        self
    }

    /// One starting state per chain.
    pub fn with_initial_states(mut self, states: Vec<LatentState>) -> Result<Self> {
        if states.len() != self.config.n_chains {
            return Err(Error::LengthMismatch {
                what: "initial states",
                expected: self.config.n_chains,
                got: states.len(),
            });
        }
        self.initial = Some(states);
        Ok(self)
    }

    /// Updates only the blocks for which `keep` returns true; everything
    /// else stays at its starting value.
    pub fn with_blocks(mut self, keep: impl Fn(Block) -> bool + Sync + 'a) -> Self {
        self.filter = Some(Box::new(keep));
        self
    }

    pub fn schedule(&self) -> Vec<Block> {
        let p = &self.problem;
        block_schedule(p.variant.kind, p.n_periods(), p.weights.components())
            .into_iter()
            .filter(|&b| self.filter.as_ref().is_none_or(|keep| keep(b)))
            .collect()
    }

    pub fn run(&self) -> Result<PosteriorSamples> {
        let blocks = self.schedule();
        if blocks.is_empty() {
            return Err(Error::Sampler("no blocks to update".into()));
        }
        let scopes: Vec<Scope> = blocks.iter().map(|&b| self.problem.scope(b)).collect();
        let n_chains = self.config.n_chains;
        let workers = self.config.threads.unwrap_or(n_chains).clamp(1, n_chains);
        let mut results: Vec<Option<Result<ChainOutput>>> = (0..n_chains).map(|_| None).collect();
        for batch in (0..n_chains).collect::<Vec<_>>().chunks(workers) {
            let outputs: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&c| {
                        let (blocks, scopes) = (&blocks, &scopes);
                        scope.spawn(move || self.run_chain(c, blocks, scopes))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Sampler("chain panicked".into()))))
                    .collect()
            });
            for (&c, out) in batch.iter().zip(outputs) {
                results[c] = Some(out);
            }
        }
        let mut chains = Vec::with_capacity(n_chains);
        let mut acceptance = AcceptanceLedger::default();
        for r in results {
            let out = r.expect("every chain ran")?;
            acceptance.merge(&out.acceptance);
            chains.push(out.values);
        }
        let p = &self.problem;
        let layout = ParamLayout::new(p.variant.kind, p.n_areas(), p.n_periods());
        PosteriorSamples::from_parts(p.variant, layout, chains, acceptance)
    }

    fn starting_state(&self, chain: usize, rng: &mut ChaCha8Rng) -> Result<LatentState> {
        let p = &self.problem;
        if let Some(states) = &self.initial {
            let s = states[chain].clone();
            if s.n_areas() != p.n_areas() || s.n_periods() != p.n_periods() {
                return Err(Error::domain("initial state does not match the panel"));
            }
            s.validate(p.variant.kind)?;
            return match p.log_posterior(&s) {
                Ok(lp) if lp.is_finite() => Ok(s),
                _ => Err(Error::Sampler("non-finite initial log-posterior".into())),
            };
        }
        let kind = p.variant.kind;
        let sd = self.config.init_jitter;
        for _ in 0..INIT_RETRIES {
            let mut s = LatentState::new(kind, p.n_areas(), p.n_periods());
            let mut jitter = || -> f64 {
                let z: f64 = StandardNormal.sample(&mut *rng);
                sd * z
            };
            for k in 0..2 {
                s.alpha[k] += jitter();
                s.kappa[k] += jitter();
            }
            s.beta += jitter();
            s.psi *= jitter().exp();
            s.sigma2_delta *= jitter().exp();
            for &f in kind.car_fields() {
                *s.tau_mut(f) *= jitter().exp();
            }
            if !kind.uses_alpha() {
                s.alpha = [0.0; 2];
            }
            if !kind.uses_kappa() {
                s.kappa = [0.0; 2];
            }
            if matches!(p.log_posterior(&s), Ok(lp) if lp.is_finite()) {
                return Ok(s);
            }
        }
        Err(Error::Sampler(format!(
            "no finite starting point after {INIT_RETRIES} attempts"
        )))
    }

    fn run_chain(&self, chain: usize, blocks: &[Block], scopes: &[Scope]) -> Result<ChainOutput> {
        let cfg = &self.config;
        let p = &self.problem;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(chain as u64));
        let start = self.starting_state(chain, &mut rng)?;
        let mut engine = Engine::new(p, start)?;
        let layout = ParamLayout::new(p.variant.kind, p.n_areas(), p.n_periods());
        let mut scales: Vec<f64> = blocks.iter().map(|b| b.initial_scale()).collect();
        let mut window_accepts = vec![0u32; blocks.len()];
        let mut round = 0;
        let mut acceptance = AcceptanceLedger::default();
        let mut values = Vec::with_capacity(cfg.n_retained() * layout.len());
        for it in 0..cfg.n_iterations {
            engine.refresh().map_err(|e| Error::Sampler(format!("chain {chain}, sweep {it}: {e}")))?;
            let burning = it < cfg.n_burnin;
            for (k, (&block, scope)) in blocks.iter().zip(scopes).enumerate() {
                let accepted = engine.step(block, scope, scales[k], &mut rng);
                if burning {
                    window_accepts[k] += accepted as u32;
                } else {
                    acceptance.record(block.family(), accepted);
                }
            }
            if burning && (it + 1) % cfg.adapt_window == 0 {
                round += 1;
                let rates: Vec<f64> = window_accepts
                    .iter()
                    .map(|&a| a as f64 / cfg.adapt_window as f64)
                    .collect();
                scales = adapt_scales(&scales, &rates, round, cfg.target_accept);
                window_accepts.iter_mut().for_each(|a| *a = 0);
            }
            if !burning && (it - cfg.n_burnin + 1) % cfg.thin == 0 {
                let ll = engine.cached_log_likelihood();
                if !ll.is_finite() {
                    return Err(Error::Sampler(format!(
                        "chain {chain}: non-finite log-likelihood at sweep {it}"
                    )));
                }
                layout.flatten_into(&engine.cur, &mut values);
            }
        }
        Ok(ChainOutput { values, acceptance })
    }
}

struct ChainOutput {
    values: Vec<f64>,
    acceptance: AcceptanceLedger,
}

/// Samples the posterior of `variant` given the panel.
pub fn run(
    data: &PanelData,
    variant: &ModelVariant,
    weights: &SpatialWeights,
    priors: &PriorConfig,
    config: &SamplerConfig,
) -> Result<PosteriorSamples> {
    Sampler::new(data, variant, weights, priors, config)?.run()
}
