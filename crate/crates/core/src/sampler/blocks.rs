//! Parameter blocks and their random-walk moves.
//!
//! Every block is a one-dimensional direction in unconstrained space. A move
//! draws `d ~ N(0, scale^2)` and shifts the state by `d` along that direction;
//! [`apply_move`] returns the log-Jacobian of the map back to the constrained
//! parameters, so the Metropolis-Hastings log-ratio is
//! `log pi(new) - log pi(old) + jacobian`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::Components;
use crate::model::{expit, CarField, LatentState, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    /// Log-link intercept `alpha_k`.
    Alpha(usize),
    /// Logit-link intercept `kappa_k`.
    Kappa(usize),
    Beta,
    /// `beta += d` with `delta_it -= d X_i`; leaves every intensity unchanged.
    BetaRidge,
    LogPsi,
    LogTau(CarField),
    /// `log tau += d` with the field scaled by `exp(-d/2)`.
    CarScale(CarField),
    /// Site `i` of a CAR field, moved along `e_i - 1/n_c` within its
    /// component. The intercepts that share the field (or, for `u`, the
    /// `delta` rows of the component) absorb the mean shift, so only area
    /// `i` changes its linear predictor when the graph is connected.
    CarSite(CarField, usize),
    /// Recentred shift of `u_i` with compensating `delta` rows.
    URidge(usize),
    /// `delta[i, t]` alone.
    DeltaSite(usize, usize),
    /// `delta[i, s..]` shifted together.
    DeltaSuffix(usize, usize),
    /// `log(1 / sigma2_delta)`.
    LogDeltaPrecision,
    /// `log(1 / sigma2_delta) += d` with all random-walk increments scaled
    /// by `exp(-d/2)`.
    DeltaScale,
    /// Logit of the mixture weight at an absolute period `>= 1`.
    LogitOmega(usize),
    LogQ1(usize),
    LogQ2(usize),
    /// `log q1` and `log q2` moved together.
    LogQBoth(usize),
}

/// Groups of blocks sharing an acceptance summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockFamily {
    Alpha,
    Kappa,
    Beta,
    BetaRidge,
    Psi,
    CarPrecision,
    CarScale,
    CarSite,
    URidge,
    Delta,
    DeltaSuffix,
    DeltaPrecision,
    DeltaScale,
    Omega,
    OmegaHyper,
}

impl BlockFamily {
    pub const ALL: [BlockFamily; 15] = [
        BlockFamily::Alpha,
        BlockFamily::Kappa,
        BlockFamily::Beta,
        BlockFamily::BetaRidge,
        BlockFamily::Psi,
        BlockFamily::CarPrecision,
        BlockFamily::CarScale,
        BlockFamily::CarSite,
        BlockFamily::URidge,
        BlockFamily::Delta,
        BlockFamily::DeltaSuffix,
        BlockFamily::DeltaPrecision,
        BlockFamily::DeltaScale,
        BlockFamily::Omega,
        BlockFamily::OmegaHyper,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockFamily::Alpha => "alpha",
            BlockFamily::Kappa => "kappa",
            BlockFamily::Beta => "beta",
            BlockFamily::BetaRidge => "beta_ridge",
            BlockFamily::Psi => "psi",
            BlockFamily::CarPrecision => "car_precision",
            BlockFamily::CarScale => "car_scale",
            BlockFamily::CarSite => "car_site",
            BlockFamily::URidge => "u_ridge",
            BlockFamily::Delta => "delta",
            BlockFamily::DeltaSuffix => "delta_suffix",
            BlockFamily::DeltaPrecision => "delta_precision",
            BlockFamily::DeltaScale => "delta_scale",
            BlockFamily::Omega => "omega",
            BlockFamily::OmegaHyper => "omega_hyper",
        }
    }
}

impl fmt::Display for BlockFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Block {
    pub fn family(self) -> BlockFamily {
        match self {
            Block::Alpha(_) => BlockFamily::Alpha,
            Block::Kappa(_) => BlockFamily::Kappa,
            Block::Beta => BlockFamily::Beta,
            Block::BetaRidge => BlockFamily::BetaRidge,
            Block::LogPsi => BlockFamily::Psi,
            Block::LogTau(_) => BlockFamily::CarPrecision,
            Block::CarScale(_) => BlockFamily::CarScale,
            Block::CarSite(..) => BlockFamily::CarSite,
            Block::URidge(_) => BlockFamily::URidge,
            Block::DeltaSite(..) => BlockFamily::Delta,
            Block::DeltaSuffix(..) => BlockFamily::DeltaSuffix,
            Block::LogDeltaPrecision => BlockFamily::DeltaPrecision,
            Block::DeltaScale => BlockFamily::DeltaScale,
            Block::LogitOmega(_) => BlockFamily::Omega,
            Block::LogQ1(_) | Block::LogQ2(_) | Block::LogQBoth(_) => BlockFamily::OmegaHyper,
        }
    }

    /// Initial proposal standard deviation before adaptation.
    pub fn initial_scale(self) -> f64 {
        match self.family() {
            BlockFamily::Alpha | BlockFamily::Beta => 0.05,
            BlockFamily::Kappa | BlockFamily::Psi | BlockFamily::CarSite => 0.1,
            BlockFamily::Delta | BlockFamily::BetaRidge | BlockFamily::URidge => 0.05,
            BlockFamily::DeltaSuffix => 0.02,
            BlockFamily::CarScale | BlockFamily::DeltaScale => 0.1,
            BlockFamily::CarPrecision
            | BlockFamily::DeltaPrecision
            | BlockFamily::Omega
            | BlockFamily::OmegaHyper => 0.5,
        }
    }

    /// Errors with [`Error::UnknownBlock`] if the block does not exist for
    /// this variant and panel size.
    pub fn check(self, kind: ModelKind, n_areas: usize, n_periods: usize) -> Result<()> {
        let field_ok = |f: CarField| kind.car_fields().contains(&f);
        let period_ok = |t: usize| kind.is_mixture() && t >= 1 && t < n_periods;
        let ok = match self {
            Block::Alpha(k) => kind.uses_alpha() && k < 2,
            Block::Kappa(k) => kind.uses_kappa() && k < 2,
            Block::Beta
            | Block::BetaRidge
            | Block::LogPsi
            | Block::LogDeltaPrecision
            | Block::DeltaScale => true,
            Block::LogTau(f) | Block::CarScale(f) => field_ok(f),
            Block::CarSite(f, i) => field_ok(f) && i < n_areas,
            Block::URidge(i) => i < n_areas,
            Block::DeltaSite(i, t) | Block::DeltaSuffix(i, t) => i < n_areas && t < n_periods,
            Block::LogitOmega(t) | Block::LogQ1(t) | Block::LogQ2(t) | Block::LogQBoth(t) => {
                period_ok(t)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownBlock(format!("{self} for {kind}")))
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Block::Alpha(k) => write!(f, "alpha{}", k + 1),
            Block::Kappa(k) => write!(f, "kappa{}", k + 1),
            Block::Beta => f.write_str("beta"),
            Block::BetaRidge => f.write_str("beta_ridge"),
            Block::LogPsi => f.write_str("log_psi"),
            Block::LogTau(c) => write!(f, "log_tau_{}", c.name()),
            Block::CarScale(c) => write!(f, "car_scale_{}", c.name()),
            Block::CarSite(c, i) => write!(f, "{}[{i}]", c.name()),
            Block::URidge(i) => write!(f, "u_ridge[{i}]"),
            Block::DeltaSite(i, t) => write!(f, "delta[{i},{t}]"),
            Block::DeltaSuffix(i, t) => write!(f, "delta_suffix[{i},{t}]"),
            Block::LogDeltaPrecision => f.write_str("log_delta_precision"),
            Block::DeltaScale => f.write_str("delta_scale"),
            Block::LogitOmega(t) => write!(f, "logit_omega[{t}]"),
            Block::LogQ1(t) => write!(f, "log_q1[{t}]"),
            Block::LogQ2(t) => write!(f, "log_q2[{t}]"),
            Block::LogQBoth(t) => write!(f, "log_q[{t}]"),
        }
    }
}

/// What a move needs beyond the state itself.
#[derive(Debug, Clone, Copy)]
pub struct MoveContext<'a> {
    pub kind: ModelKind,
    pub covariate: &'a [f64],
    pub components: &'a Components,
}

impl MoveContext<'_> {
    /// Dimension of a sum-to-zero field: `N - components`.
    pub fn field_rank(&self) -> usize {
        self.components.labels().len() - self.components.count()
    }
}

/// The sweep order for a variant. Sites in singleton components are
/// skipped: their CAR values are pinned at zero.
pub fn block_schedule(kind: ModelKind, n_periods: usize, components: &Components) -> Vec<Block> {
    let n_areas = components.labels().len();
    let mut out = Vec::new();
    for k in 0..2 {
        if kind.uses_alpha() {
            out.push(Block::Alpha(k));
        }
        if kind.uses_kappa() {
            out.push(Block::Kappa(k));
        }
    }
    out.push(Block::Beta);
    out.push(Block::BetaRidge);
    out.push(Block::LogPsi);
    let free = |i: usize| components.members(components.label(i)).len() > 1;
    for &field in kind.car_fields() {
        out.extend((0..n_areas).filter(|&i| free(i)).map(|i| Block::CarSite(field, i)));
        out.push(Block::LogTau(field));
        out.push(Block::CarScale(field));
    }
    out.extend((0..n_areas).filter(|&i| free(i)).map(Block::URidge));
    for i in 0..n_areas {
        out.extend((0..n_periods).map(|t| Block::DeltaSite(i, t)));
        out.extend((0..n_periods).map(|t| Block::DeltaSuffix(i, t)));
    }
    out.push(Block::LogDeltaPrecision);
    out.push(Block::DeltaScale);
    if kind.is_mixture() {
        for t in 1..n_periods {
            out.push(Block::LogitOmega(t));
            out.push(Block::LogQ1(t));
            out.push(Block::LogQ2(t));
            out.push(Block::LogQBoth(t));
        }
    }
    out
}

fn logit(w: f64) -> f64 {
    w.ln() - (-w).ln_1p()
}

fn ln_w_one_minus_w(w: f64) -> f64 {
    w.ln() + (-w).ln_1p()
}

/// Shifts `state` by `d` along the block's direction and returns the
/// log-Jacobian term. The block must have passed [`Block::check`].
pub fn apply_move(state: &mut LatentState, block: Block, d: f64, ctx: &MoveContext<'_>) -> f64 {
    let n_periods = state.n_periods();
    match block {
        Block::Alpha(k) => {
            state.alpha[k] += d;
            0.0
        }
        Block::Kappa(k) => {
            state.kappa[k] += d;
            0.0
        }
        Block::Beta => {
            state.beta += d;
            0.0
        }
        Block::BetaRidge => {
            state.beta += d;
            for (i, row) in state.delta.chunks_mut(n_periods).enumerate() {
                let shift = d * ctx.covariate[i];
                row.iter_mut().for_each(|v| *v -= shift);
            }
            0.0
        }
        Block::LogPsi => {
            state.psi *= d.exp();
            d
        }
        Block::LogTau(field) => {
            *state.tau_mut(field) *= d.exp();
            d
        }
        Block::CarScale(field) => {
            *state.tau_mut(field) *= d.exp();
            let s = (-0.5 * d).exp();
            state.car_mut(field).iter_mut().for_each(|v| *v *= s);
            d - 0.5 * d * ctx.field_rank() as f64
        }
        Block::CarSite(field, i) => {
            let members = ctx.components.members(ctx.components.label(i));
            let shift = d / members.len() as f64;
            let values = state.car_mut(field);
            values[i] += d;
            for &j in members {
                values[j] -= shift;
            }
            if field == CarField::U {
                for &j in members {
                    let row = &mut state.delta[j * n_periods..(j + 1) * n_periods];
                    row.iter_mut().for_each(|v| *v += shift);
                }
            } else {
                for k in 0..2 {
                    if ctx.kind.explosive_field(k) == Some(field) {
                        state.alpha[k] += shift;
                    }
                    if ctx.kind.stationary_field(k) == Some(field) {
                        state.kappa[k] += shift;
                    }
                }
            }
            0.0
        }
        Block::URidge(i) => {
            let members = ctx.components.members(ctx.components.label(i));
            let shift = d / members.len() as f64;
            let u = state.car_mut(CarField::U);
            u[i] += d;
            for &j in members {
                u[j] -= shift;
            }
            for &j in members {
                let delta_shift = if j == i { shift - d } else { shift };
                let row = &mut state.delta[j * n_periods..(j + 1) * n_periods];
                row.iter_mut().for_each(|v| *v += delta_shift);
            }
            0.0
        }
        Block::DeltaSite(i, t) => {
            state.delta[i * n_periods + t] += d;
            0.0
        }
        Block::DeltaSuffix(i, s) => {
            state.delta[i * n_periods + s..(i + 1) * n_periods]
                .iter_mut()
                .for_each(|v| *v += d);
            0.0
        }
        Block::LogDeltaPrecision => {
            state.sigma2_delta *= (-d).exp();
            d
        }
        Block::DeltaScale => {
            state.sigma2_delta *= (-d).exp();
            let s = (-0.5 * d).exp();
            for row in state.delta.chunks_mut(n_periods) {
                let first = row[0];
                row[1..].iter_mut().for_each(|v| *v = first + s * (*v - first));
            }
            let n_increments = state.n_areas() * (n_periods - 1);
            d - 0.5 * d * n_increments as f64
        }
        Block::LogitOmega(t) => {
            let w = state.omega[t - 1];
            let w_new = expit(logit(w) + d);
            state.omega[t - 1] = w_new;
            ln_w_one_minus_w(w_new) - ln_w_one_minus_w(w)
        }
        Block::LogQ1(t) => {
            state.q1[t - 1] *= d.exp();
            d
        }
        Block::LogQ2(t) => {
            state.q2[t - 1] *= d.exp();
            d
        }
        Block::LogQBoth(t) => {
            let e = d.exp();
            state.q1[t - 1] *= e;
            state.q2[t - 1] *= e;
            2.0 * d
        }
    }
}

/// Copies every part of `src` that `block` can modify into `dst`.
pub(crate) fn sync_block(dst: &mut LatentState, src: &LatentState, block: Block) {
    match block {
        Block::Alpha(k) => dst.alpha[k] = src.alpha[k],
        Block::Kappa(k) => dst.kappa[k] = src.kappa[k],
        Block::Beta => dst.beta = src.beta,
        Block::BetaRidge => {
            dst.beta = src.beta;
            dst.delta.copy_from_slice(&src.delta);
        }
        Block::LogPsi => dst.psi = src.psi,
        Block::LogTau(f) => *dst.tau_mut(f) = src.tau(f),
        Block::CarScale(f) => {
            *dst.tau_mut(f) = src.tau(f);
            dst.car_mut(f).copy_from_slice(src.car(f));
        }
        Block::CarSite(f, _) => {
            dst.car_mut(f).copy_from_slice(src.car(f));
            if f == CarField::U {
                dst.delta.copy_from_slice(&src.delta);
            } else {
                dst.alpha = src.alpha;
                dst.kappa = src.kappa;
            }
        }
        Block::URidge(_) => {
            dst.car_mut(CarField::U).copy_from_slice(src.car(CarField::U));
            dst.delta.copy_from_slice(&src.delta);
        }
        Block::DeltaSite(i, t) => {
            let idx = i * src.n_periods() + t;
            dst.delta[idx] = src.delta[idx];
        }
        Block::DeltaSuffix(i, _) => {
            let row = i * src.n_periods()..(i + 1) * src.n_periods();
            dst.delta[row.clone()].copy_from_slice(&src.delta[row]);
        }
        Block::LogDeltaPrecision => dst.sigma2_delta = src.sigma2_delta,
        Block::DeltaScale => {
            dst.sigma2_delta = src.sigma2_delta;
            dst.delta.copy_from_slice(&src.delta);
        }
        Block::LogitOmega(t) => dst.omega[t - 1] = src.omega[t - 1],
        Block::LogQ1(t) | Block::LogQ2(t) | Block::LogQBoth(t) => {
            dst.q1[t - 1] = src.q1[t - 1];
            dst.q2[t - 1] = src.q2[t - 1];
        }
    }
}

/// Metropolis-Hastings decision. `log_ratio` may be NaN or infinite; only a
/// value strictly above `ln u` accepts.
pub(crate) fn accept(log_ratio: f64, u: f64) -> bool {
    u.ln() < log_ratio
}

/// Draws the two variates every update consumes, in a fixed order.
pub(crate) fn draw_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    (z, u)
}

/// One random-walk Metropolis-Hastings update of `block`, evaluating the
/// full `log_posterior` before and after. A proposal at which the
/// posterior errors is rejected; an error at the current state propagates.
/// On rejection `state` is left bit-for-bit unchanged.
pub fn update_block<R, F>(
    state: &mut LatentState,
    block: Block,
    ctx: &MoveContext<'_>,
    log_posterior: F,
    rng: &mut R,
    step_scale: f64,
) -> Result<bool>
where
    R: Rng + ?Sized,
    F: Fn(&LatentState) -> Result<f64>,
{
    block.check(ctx.kind, state.n_areas(), state.n_periods())?;
    let (z, u) = draw_pair(rng);
    let current = log_posterior(state)?;
    let mut proposal = state.clone();
    let jacobian = apply_move(&mut proposal, block, step_scale * z, ctx);
    let ratio = match log_posterior(&proposal) {
        Ok(lp) => lp - current + jacobian,
        Err(_) => f64::NEG_INFINITY,
    };
    if accept(ratio, u) {
        *state = proposal;
        Ok(true)
    } else {
        Ok(false)
    }
}
