#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_epimix");

pub fn epimix(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn epimix_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("EPIMIX_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Simulates a short panel into `dir/sim` and returns that directory.
pub fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let sim = dir.join("sim");
    let mut args = vec!["simulate", "--out", p(&sim), "--n_periods=12", "--seed=5"];
    args.extend(extra);
    let out = epimix(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    sim
}

/// Short fit of `variant` on a simulated panel; exit code 0 or 4.
pub fn fit(sim: &Path, variant: &str, out: &Path, extra: &[&str]) -> Output {
    let variant = format!("--model.variant={variant}");
    let config = sim.join("fit.toml");
    let mut args = vec![
        "fit",
        "--config",
        p(&config),
        "--out",
        p(out),
        &variant,
        "--sampler.n_iterations=400",
        "--sampler.n_burnin=200",
    ];
    args.extend(extra);
    let o = epimix(&args);
    assert!(matches!(code(&o), 0 | 4), "{}", stderr(&o));
    o
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// `metric,value` files as a map.
pub fn read_metrics(path: &Path) -> HashMap<String, String> {
    read_csv(path).1.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect()
}

/// Names of regular files in `dir`, sorted.
pub fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Every file in `a` exists in `b` with identical bytes.
pub fn assert_same_files(a: &Path, b: &Path) {
    let names = files(a);
    assert_eq!(names, files(b));
    for n in names {
        let x = std::fs::read(a.join(&n)).unwrap();
        let y = std::fs::read(b.join(&n)).unwrap();
        assert!(x == y, "{n} differs between {} and {}", a.display(), b.display());
    }
}
