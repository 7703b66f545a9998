//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Criteria 4, 5 and 6 run full MCMC fits and take several
//! minutes on one core.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use epimix::forecast::{evaluate, one_step_ahead, OmegaForecast};
use epimix::graph::{build_graph, row_standardize};
use epimix::model::{link_coefficients, nb_log_pmf, LatentState, ModelKind, ModelVariant, PanelData};
use epimix::priors::{icar_log_density, omega_log_density, rw1_log_density, total_log_posterior, PriorConfig};
use epimix::sampler::{Block, Sampler, SamplerConfig};
use epimix::scoring::{draw_moments, dss, rps, waic};
use epimix::simulate::{simulate_panel, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {n} ({name}, {secs:.0}s): {detail}");
    verdict.is_ok()
}

// Criterion 1: independent oracles.

/// NB log-pmf from the explicit product form of the gamma ratio.
fn nb_oracle(y: u64, mu: f64, psi: f64) -> f64 {
    let ratio: f64 = (0..y).map(|k| ((psi + k as f64) / (k as f64 + 1.0)).ln()).sum();
    ratio + psi * (psi / (psi + mu)).ln() + y as f64 * (mu / (psi + mu)).ln()
}

/// Rank of a symmetric matrix by Gaussian elimination with partial pivoting.
fn rank(mut a: Vec<Vec<f64>>) -> usize {
    let n = a.len();
    let mut r = 0;
    for c in 0..n {
        let Some(p) = (r..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())) else {
            break;
        };
        if a[p][c].abs() < 1e-9 {
            continue;
        }
        a.swap(r, p);
        for i in r + 1..n {
            let f = a[i][c] / a[r][c];
            for j in c..n {
                a[i][j] -= f * a[r][j];
            }
        }
        r += 1;
    }
    r
}

fn icar_oracle(f: &[f64], edges: &[(usize, usize)], tau: f64) -> f64 {
    let n = f.len();
    let mut q = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        q[i][i] += 1.0;
        q[j][j] += 1.0;
        q[i][j] -= 1.0;
        q[j][i] -= 1.0;
    }
    let quad: f64 = (0..n).map(|i| (0..n).map(|j| f[i] * q[i][j] * f[j]).sum::<f64>()).sum();
    -0.5 * tau * quad + 0.5 * rank(q) as f64 * tau.ln()
}

/// Joint Gaussian density of the walk, `Cov(d_s, d_t) = v0 + s2 min(s, t)`.
fn rw1_oracle(d: &[f64], s2: f64, v0: f64) -> f64 {
    let n = d.len();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..n).map(|t| v0 + s2 * s.min(t) as f64).collect())
        .collect();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (cov[i][i] - s).sqrt() } else { (cov[i][j] - s) / l[j][j] };
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (d[i] - s) / l[i][i];
    }
    let log_det: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.iter().map(|x| x * x).sum::<f64>())
}

fn factorial(n: u64) -> u128 {
    (1..=n as u128).product()
}

/// Beta log-density with integer parameters and an exact normaliser.
fn beta_oracle_integer(w: f64, q1: u64, q2: u64) -> f64 {
    let inv_b = factorial(q1 + q2 - 1) as f64 / (factorial(q1 - 1) * factorial(q2 - 1)) as f64;
    inv_b.ln() + (q1 - 1) as f64 * w.ln() + (q2 - 1) as f64 * (1.0 - w).ln()
}

/// RPS in exact integer arithmetic: `sum_k (c_k - n [y <= k])^2 / n^2`.
fn rps_oracle(draws: &[u64], y: u64) -> f64 {
    let n = draws.len() as i128;
    let top = draws.iter().copied().max().unwrap().max(y);
    let num: i128 = (0..=top)
        .map(|k| {
            let c = draws.iter().filter(|&&d| d <= k).count() as i128;
            let step = if y <= k { n } else { 0 };
            (c - step).pow(2)
        })
        .sum();
    num as f64 / (n * n) as f64
}

/// DSS with the predictive mean and variance taken exactly from the draws.
fn dss_oracle(draws: &[u64], y: u64) -> f64 {
    let n = draws.len() as i128;
    let s: i128 = draws.iter().map(|&d| d as i128).sum();
    let ss: i128 = draws.iter().map(|&d| (d as i128).pow(2)).sum();
    let var_num = n * ss - s * s;
    let var = var_num as f64 / (n * (n - 1)) as f64;
    let err_num = y as i128 * n - s;
    (err_num * err_num) as f64 / (n * n) as f64 / var + var.ln()
}

fn waic_oracle(ll: &[Vec<f64>]) -> f64 {
    let s = ll.len() as f64;
    let mut lppd = 0.0;
    let mut p = 0.0;
    for i in 0..ll[0].len() {
        let col: Vec<f64> = ll.iter().map(|r| r[i]).collect();
        lppd += (col.iter().map(|x| x.exp()).sum::<f64>() / s).ln();
        let m = col.iter().sum::<f64>() / s;
        p += col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s - 1.0);
    }
    -2.0 * (lppd - p)
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: HashMap<&str, f64> = HashMap::new();
    let mut fails = Vec::new();
    let mut record = |name: &'static str, got: f64, want: f64, tol: f64| {
        let d = (got - want).abs();
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(d);
        if !(d < tol) {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    };
    for _ in 0..40 {
        let y = rng.random_range(0..80u64);
        let mu = rng.random_range(0.05..300.0);
        let psi = rng.random_range(0.1..100.0);
        let tol = if y < 24 { 1e-9 } else { 1e-6 };
        record("nb_log_pmf", nb_log_pmf(y, mu, psi).unwrap(), nb_oracle(y, mu, psi), tol);
    }
    for _ in 0..25 {
        let n = rng.random_range(2..8usize);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((i, j));
                }
            }
        }
        let g = build_graph(&edges, n).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tau = rng.random_range(0.1..30.0);
        record("icar_log_density", icar_log_density(&f, &g, tau).unwrap(), icar_oracle(&f, &edges, tau), 1e-9);
    }
    for _ in 0..25 {
        let n = rng.random_range(1..9usize);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s2 = rng.random_range(0.01..2.0);
        let v0 = rng.random_range(0.1..10.0);
        record("rw1_log_density", rw1_log_density(&d, s2, v0).unwrap(), rw1_oracle(&d, s2, v0), 1e-9);
    }
    for _ in 0..25 {
        let w = rng.random_range(0.001..0.999);
        let q1 = rng.random_range(1..12u64);
        let q2 = rng.random_range(1..12u64);
        record(
            "omega_log_density",
            omega_log_density(w, q1 as f64, q2 as f64).unwrap(),
            beta_oracle_integer(w, q1, q2),
            1e-6,
        );
    }
    for _ in 0..20 {
        // Non-integer parameters: the density integrates to one.
        let q1 = rng.random_range(2.0..8.0);
        let q2 = rng.random_range(2.0..8.0);
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |k: usize| {
            if k == 0 || k == n {
                return 0.0;
            }
            omega_log_density(k as f64 * h, q1, q2).unwrap().exp()
        };
        let simpson: f64 = (0..=n)
            .map(|k| {
                let c = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                c * f(k)
            })
            .sum::<f64>()
            * h
            / 3.0;
        record("omega_log_density (mass)", simpson, 1.0, 1e-6);
    }
    for _ in 0..30 {
        let n = rng.random_range(1..60usize);
        let draws: Vec<u64> = (0..n).map(|_| rng.random_range(0..50u64)).collect();
        let y = rng.random_range(0..60u64);
        record("rps", rps(&draws, y).unwrap(), rps_oracle(&draws, y), 1e-9);
        let draws: Vec<u64> = (0..n + 2).map(|_| rng.random_range(0..500u64)).collect();
        if draws.iter().all(|&d| d == draws[0]) {
            continue;
        }
        let (m, v) = draw_moments(&draws);
        let got = dss(m, v, y as f64).unwrap();
        let want = dss_oracle(&draws, y);
        record("dss", got, want, 1e-9 * (1.0 + want.abs()));
    }
    for _ in 0..25 {
        let s = rng.random_range(2..40usize);
        let n = rng.random_range(1..8usize);
        let ll: Vec<Vec<f64>> = (0..s)
            .map(|_| (0..n).map(|_| rng.random_range(-9.0..0.0)).collect())
            .collect();
        record("waic", waic(&ll).unwrap().waic, waic_oracle(&ll), 1e-9);
    }
    let mut summary: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    summary.sort();
    let detail = format!("max |diff|: {}", summary.join(", "));
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

// Criterion 2.

fn criterion_2() -> Verdict {
    use epimix::model::CarField;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..50 {
        for kind in [ModelKind::M3, ModelKind::M4] {
            let n = rng.random_range(2..7usize);
            let t = rng.random_range(2..6usize);
            let mut s = LatentState::new(kind, n, t);
            s.alpha = [rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0)];
            s.kappa = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            for &f in kind.car_fields() {
                *s.car_mut(f) = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            }
            let mut m1 = LatentState::new(ModelKind::M1, n, t);
            m1.alpha = s.alpha;
            *m1.car_mut(CarField::F1) = s.car(kind.explosive_field(0).unwrap()).to_vec();
            *m1.car_mut(CarField::F2) = s.car(kind.explosive_field(1).unwrap()).to_vec();
            let mut m2 = LatentState::new(ModelKind::M2, n, t);
            m2.kappa = s.kappa;
            *m2.car_mut(CarField::F3) = s.car(kind.stationary_field(0).unwrap()).to_vec();
            *m2.car_mut(CarField::F4) = s.car(kind.stationary_field(1).unwrap()).to_vec();
            for (w, single) in [(1.0, (&m1, ModelKind::M1)), (0.0, (&m2, ModelKind::M2))] {
                s.omega = vec![w; t - 1];
                let mix = link_coefficients(&ModelVariant::unit(kind), &s).unwrap();
                let one = link_coefficients(&ModelVariant::unit(single.1), single.0).unwrap();
                for (a, b) in mix
                    .rho_values()
                    .iter()
                    .chain(mix.lambda_values())
                    .zip(one.rho_values().iter().chain(one.lambda_values()))
                {
                    worst = worst.max((a - b).abs());
                }
                cases += 1;
            }
        }
    }
    check(worst < 1e-12, format!("{cases} random states, max |diff| {worst:.1e}"))
}

// Criterion 3.

fn criterion_3() -> Verdict {
    let g = build_graph(&[(0, 1)], 2).unwrap();
    let w = row_standardize(&g, None).unwrap();
    let data = PanelData::new(2, 3, vec![4, 6, 9, 3, 5, 4], vec![1.2, 2.6]).unwrap();
    let variant = ModelVariant::unit(ModelKind::M1);
    let priors = PriorConfig::default();
    let mut start = LatentState::new(ModelKind::M1, 2, 3);
    start.alpha = [-0.7, -1.2];
    start.delta = vec![1.0, 1.2, 1.1, 0.9, 1.0, 0.8];
    let cfg = SamplerConfig {
        n_chains: 1,
        n_iterations: 52_000,
        n_burnin: 2_000,
        seed: 33,
        ..SamplerConfig::default()
    };
    let samples = Sampler::new(&data, &variant, &w, &priors, &cfg)
        .unwrap()
        .with_initial(start.clone())
        .with_blocks(|b| b == Block::Beta)
        .run()
        .unwrap();
    let draws = samples.pooled_by_name("beta").unwrap();

    let (lo, hi) = (-12.0, 12.0);
    let n_grid = 24_000;
    let h = (hi - lo) / n_grid as f64;
    let logp: Vec<f64> = (0..n_grid)
        .map(|k| {
            let mut s = start.clone();
            s.beta = lo + (k as f64 + 0.5) * h;
            total_log_posterior(&s, &variant, &w, &data, &priors).map_or(f64::NEG_INFINITY, |t| t.total)
        })
        .collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = dens.iter().sum();
    let n_bins = 48;
    let mut grid = vec![0.0; n_bins];
    for (k, d) in dens.iter().enumerate() {
        grid[k * n_bins / n_grid] += d / z;
    }
    let mut mcmc = vec![0.0; n_bins];
    for &x in &draws {
        let b = (((x - lo) / (hi - lo)) * n_bins as f64).floor().clamp(0.0, (n_bins - 1) as f64) as usize;
        mcmc[b] += 1.0 / draws.len() as f64;
    }
    let tv = 0.5 * grid.iter().zip(&mcmc).map(|(a, b)| (a - b).abs()).sum::<f64>();
    check(
        draws.len() == 50_000 && tv < 0.05,
        format!("{} draws of beta, total variation {tv:.4} vs grid posterior", draws.len()),
    )
}

// Criteria 4 and 7 share one full-length fit.

fn truth_values(sim: &Path) -> HashMap<String, f64> {
    read_csv(&sim.join("truth.csv"))
        .1
        .into_iter()
        .map(|r| (r[0].clone(), r[1].parse().unwrap()))
        .collect()
}

fn summary_rows(run: &Path) -> HashMap<String, Vec<f64>> {
    read_csv(&run.join("posterior_summary.csv"))
        .1
        .into_iter()
        .map(|r| (r[0].clone(), r[1..].iter().map(|x| x.parse().unwrap_or(f64::NAN)).collect()))
        .collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn full_fit(root: &Path) -> (PathBuf, PathBuf) {
    let sim = root.join("sim");
    let out = epimix(&["simulate", "--out", p(&sim)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = root.join("fit-m4");
    let out = epimix(&["fit", "--config", p(&sim.join("fit.toml")), "--out", p(&run)]);
    assert!(matches!(code(&out), 0 | 4), "{}", stderr(&out));
    (sim, run)
}

fn criterion_4(sim: &Path, run: &Path) -> Verdict {
    let truth = truth_values(sim);
    let post = summary_rows(run);
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["alpha1", "kappa1", "beta", "psi"] {
        let (mean, sd) = (post[name][0], post[name][1]);
        let z = (mean - truth[name]) / sd;
        ok &= z.abs() < 3.0;
        parts.push(format!("{name} z={z:+.2}"));
    }
    let m = (1..40).collect::<Vec<_>>();
    let est: Vec<f64> = m.iter().map(|t| post[&format!("omega[{t}]")][0]).collect();
    let tru: Vec<f64> = m.iter().map(|t| truth[&format!("omega[{t}]")]).collect();
    let r = correlation(&est, &tru);
    ok &= r > 0.8;
    let diag = read_metrics_kind(&run.join("diagnostics.csv"));
    let psrf_max = diag["psrf_max"];
    ok &= psrf_max < 1.1;
    parts.push(format!("omega r={r:.3}"));
    parts.push(format!("max psrf {psrf_max:.3}"));
    check(ok, parts.join(", "))
}

fn read_metrics_kind(path: &Path) -> HashMap<String, f64> {
    read_csv(path)
        .1
        .into_iter()
        .filter(|r| r[0] == "psrf_max")
        .map(|r| (r[0].clone(), r[2].parse().unwrap_or(f64::NAN)))
        .collect()
}

fn criterion_7(run: &Path) -> Verdict {
    let (_, rows) = read_csv(&run.join("Rx_Lx.csv"));
    let series: Vec<(usize, f64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    let window = 20..=26;
    let &(peak, peak_value) = series.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let outside = series
        .iter()
        .filter(|(t, _)| !window.contains(t))
        .map(|&(_, v)| v)
        .fold(0.0, f64::max);
    check(
        window.contains(&peak) && outside < 0.1 * 20.0,
        format!("R^x peaks at period {peak} ({peak_value:.1} of 20 areas), max outside window {outside:.2}"),
    )
}

// Criterion 5.

const REDUCED: [&str; 2] = ["--sampler.n_iterations=3000", "--sampler.n_burnin=1500"];

fn criterion_5(root: &Path) -> Verdict {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let dir = root.join(format!("rep{seed}"));
        let sim = dir.join("sim");
        let seed_arg = format!("--seed={seed}");
        let out = epimix(&["simulate", "--out", p(&sim), &seed_arg]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let mut runs = Vec::new();
        for v in ["m1", "m2", "m3", "m4"] {
            let run = dir.join(v);
            fit(&sim, v, &run, &REDUCED);
            runs.push(run);
        }
        let cmp = dir.join("compare");
        let mut args = vec!["compare", "--out", p(&cmp)];
        args.extend(runs.iter().map(|r| p(r)));
        let out = epimix(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let (_, rows) = read_csv(&cmp.join("comparison.csv"));
        let order: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
        if matches!(order[0], "m3" | "m4") {
            wins += 1;
        }
        lines.push(format!("seed {seed}: {}", order.join(">")));
    }
    check(wins >= 4, format!("mixture best on WAIC in {wins}/5 ({})", lines.join("; ")))
}

// Criterion 6.

fn calibration_fit(scenario: &Scenario, variant: ModelKind, sweeps: usize) -> bool {
    let sim = simulate_panel(scenario).unwrap();
    let cfg = SamplerConfig {
        n_iterations: sweeps,
        n_burnin: sweeps / 2,
        seed: scenario.seed,
        ..SamplerConfig::default()
    };
    let v = ModelVariant::unit(variant);
    let samples = Sampler::new(&sim.data, &v, &sim.weights, &PriorConfig::default(), &cfg)
        .unwrap()
        .run()
        .unwrap();
    let draws = one_step_ahead(&samples, &sim.data, &sim.weights, scenario.seed, OmegaForecast::Persist).unwrap();
    evaluate(&draws, sim.data.holdout().unwrap()).unwrap().total_covered
}

fn criterion_6() -> Verdict {
    let n_endemic = 50;
    let mut covered = 0;
    for seed in 0..n_endemic {
        let mut s = Scenario {
            seed: 1000 + seed,
            n_periods: 20,
            ..Scenario::default()
        };
        s.truth.windows.clear();
        covered += calibration_fit(&s, ModelKind::M4, 2000) as usize;
    }
    let endemic = covered as f64 / n_endemic as f64;

    let n_explosive = 20;
    let (mut m4, mut m1) = (0, 0);
    for seed in 0..n_explosive {
        let mut s = Scenario {
            seed: 2000 + seed,
            n_periods: 20,
            ..Scenario::default()
        };
        // The epidemic peaks two periods before the holdout, which falls in
        // the downturn.
        s.truth.windows = vec![[14, 19]];
        m4 += calibration_fit(&s, ModelKind::M4, 2000) as usize;
        m1 += calibration_fit(&s, ModelKind::M1, 2000) as usize;
    }
    check(
        endemic >= 0.85 && m4 > m1,
        format!(
            "endemic total coverage {covered}/{n_endemic}; explosive coverage m4 {m4}/{n_explosive} vs m1 {m1}/{n_explosive}"
        ),
    )
}

// Criterion 8.

fn criterion_8(root: &Path) -> Verdict {
    let sim = simulate(root, &[]);
    let again = root.join("sim-again");
    let o = epimix(&["simulate", "--config", p(&sim.join("simulate_manifest.toml")), "--out", p(&again)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_same_files(&sim, &again);
    let mut checked = vec!["simulate"];

    let a = root.join("a");
    let b = root.join("b");
    fit(&sim, "m4", &a, &["--output.trace=true"]);
    fit(&sim, "m2", &b, &[]);
    let a2 = root.join("a-again");
    let o = epimix(&["fit", "--config", p(&a.join("fit_manifest.toml")), "--out", p(&a2)]);
    assert!(matches!(code(&o), 0 | 4), "{}", stderr(&o));
    assert_same_files(&a, &a2);
    checked.push("fit");

    for cmd in ["forecast", "score", "diag"] {
        let first = root.join(cmd);
        let second = root.join(format!("{cmd}-again"));
        let o = epimix(&[cmd, "--run", p(&a), "--out", p(&first)]);
        assert!(matches!(code(&o), 0 | 4), "{}", stderr(&o));
        let manifest = first.join(format!("{cmd}_manifest.toml"));
        let o = epimix(&[cmd, "--config", p(&manifest), "--out", p(&second)]);
        assert!(matches!(code(&o), 0 | 4), "{}", stderr(&o));
        assert_same_files(&first, &second);
        checked.push(cmd);
    }

    let c1 = root.join("compare");
    let c2 = root.join("compare-again");
    assert_eq!(code(&epimix(&["compare", p(&a), p(&b), "--out", p(&c1)])), 0);
    let o = epimix(&["compare", "--config", p(&c1.join("compare_manifest.toml")), "--out", p(&c2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_same_files(&c1, &c2);
    checked.push("compare");
    Ok(format!("bit-identical reruns for {}", checked.join(", ")))
}

/// `EPIMIX_ACCEPTANCE=1,2,3` restricts the run to the listed criteria;
/// unset runs all of them.
fn selected() -> Vec<usize> {
    match std::env::var("EPIMIX_ACCEPTANCE") {
        Ok(list) => list.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        Err(_) => (1..=8).collect(),
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let want = selected();
    let on = |n: usize| want.contains(&n);
    let mut ok = true;
    if on(1) {
        ok &= run(1, "oracle equivalence", criterion_1);
    }
    if on(2) {
        ok &= run(2, "mixture collapse", criterion_2);
    }
    if on(3) {
        ok &= run(3, "sampler vs grid posterior", criterion_3);
    }
    let fitted = (on(4) || on(7)).then(|| catch_unwind(AssertUnwindSafe(|| full_fit(root))));
    let failed = || -> Verdict { Err("full-length fit failed".into()) };
    if on(4) {
        ok &= match &fitted {
            Some(Ok((sim, fit))) => run(4, "parameter recovery", || criterion_4(sim, fit)),
            _ => run(4, "parameter recovery", failed),
        };
    }
    if on(5) {
        ok &= run(5, "directional model comparison", || criterion_5(&root.join("c5")));
    }
    if on(6) {
        ok &= run(6, "forecast calibration", criterion_6);
    }
    if on(7) {
        ok &= match &fitted {
            Some(Ok((_, fit))) => run(7, "exceedance mechanics", || criterion_7(fit)),
            _ => run(7, "exceedance mechanics", failed),
        };
    }
    if on(8) {
        let c8 = root.join("c8");
        std::fs::create_dir_all(&c8).unwrap();
        ok &= run(8, "determinism", || criterion_8(&c8));
    }
    if !ok {
        std::process::exit(1);
    }
}
