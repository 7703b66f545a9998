//! The `epimix` command-line tool.
//!
//! Every subcommand reads a TOML configuration (or a manifest written by an
//! earlier run) and accepts `--section.key=value` overrides.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use toml::Value;

use crate::config::{load, parse_override, CompareConfig, FitConfig, RunConfig};
use crate::error::{exit, CliResult, Tag};

const FIT_PATHS: &[&str] = &["data.counts", "data.adjacency", "data.covariate", "output.dir"];
const RUN_PATHS: &[&str] = &["run", "output.dir"];
const COMPARE_PATHS: &[&str] = &["runs", "output.dir"];
const SIMULATE_PATHS: &[&str] = &["output.dir"];

/// Flags handled by clap; every other `--key=value` is a config override.
const FLAGS: &[&str] = &["config", "out", "run", "help", "version"];

#[derive(Debug, Parser)]
#[command(
    name = "epimix",
    version,
    about = "Link-mixture autoregressive models for spatio-temporal infection counts",
    after_help = "Any option of the form --section.key=value overrides the configuration."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (`output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic panel with known truth.
    Simulate(#[command(flatten)] Common),
    /// Fit a model to a counts panel.
    Fit(#[command(flatten)] Common),
    /// One-step-ahead forecast from a fitted run.
    Forecast(RunArgs),
    /// Recompute in-sample and one-step scores for a fitted run.
    Score(RunArgs),
    /// Convergence diagnostics for a fitted run.
    Diag(RunArgs),
    /// Tabulate scores across fitted runs.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Run directories.
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Directory written by `fit`.
    #[arg(long)]
    run: Option<PathBuf>,
}

fn is_override(arg: &str) -> bool {
    arg.strip_prefix("--")
        .and_then(|body| body.split_once('='))
        .is_some_and(|(key, _)| !FLAGS.contains(&key))
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

/// Runs the tool on `args` (without the program name) and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    match dispatch(args.into_iter().map(Into::into).collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(args: Vec<String>) -> CliResult<i32> {
    let (overrides, rest): (Vec<String>, Vec<String>) = args.into_iter().partition(|a| is_override(a));
    let mut overrides = overrides
        .iter()
        .map(|a| parse_override(a))
        .collect::<anyhow::Result<Vec<_>>>()
        .ingest()?;
    let cli = match Cli::try_parse_from(std::iter::once("epimix".to_string()).chain(rest)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INGEST } else { exit::SUCCESS };
            let _ = e.print();
            return Ok(code);
        }
    };
    let mut common_overrides = |common: &Common| {
        if let Some(out) = &common.out {
            overrides.push(("output.dir".into(), path_value(out)));
        }
        common.config.clone()
    };
    match cli.command {
        Command::Simulate(common) => {
            let config = common_overrides(&common);
            let loaded = load("simulate", config.as_deref(), &overrides, SIMULATE_PATHS)?;
            commands::simulate::cmd_simulate(loaded)
        }
        Command::Fit(common) => {
            let config = common_overrides(&common);
            let loaded = load::<FitConfig>("fit", config.as_deref(), &overrides, FIT_PATHS)?;
            let outcome = commands::fit::cmd_fit(loaded)?;
            if let Some(r) = outcome.max_psrf {
                println!("max psrf {r:.4}");
            }
            print!("{}", outcome.score.to_key_value());
            Ok(outcome.exit_code)
        }
        Command::Forecast(args) => {
            let loaded = run_config("forecast", &args, &mut overrides)?;
            commands::run::cmd_forecast(loaded)
        }
        Command::Score(args) => {
            let loaded = run_config("score", &args, &mut overrides)?;
            commands::run::cmd_score(loaded)
        }
        Command::Diag(args) => {
            let loaded = run_config("diag", &args, &mut overrides)?;
            commands::run::cmd_diag(loaded)
        }
        Command::Compare { common, runs } => {
            let config = common_overrides(&common);
            if !runs.is_empty() {
                overrides.push(("runs".into(), Value::Array(runs.iter().map(|p| path_value(p)).collect())));
            }
            let loaded = load::<CompareConfig>("compare", config.as_deref(), &overrides, COMPARE_PATHS)?;
            commands::compare::cmd_compare(loaded)
        }
    }
}

fn run_config(
    command: &str,
    args: &RunArgs,
    overrides: &mut Vec<(String, Value)>,
) -> CliResult<config::Loaded<RunConfig>> {
    if let Some(out) = &args.common.out {
        overrides.push(("output.dir".into(), path_value(out)));
    }
    if let Some(run) = &args.run {
        overrides.push(("run".into(), path_value(run)));
    }
    load(command, args.common.config.as_deref(), overrides, RUN_PATHS)
}
