//! Configuration files, `--key=value` overrides and path resolution.
//!
//! Every command reads a TOML table. Relative paths inside a config file are
//! resolved against the file's directory; relative paths given on the
//! command line are resolved against the working directory.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use epimix::forecast::OmegaForecast;
use epimix::model::{ModelKind, ModelVariant, StationaryRange};
use epimix::priors::PriorConfig;
use epimix::sampler::SamplerConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliResult, Tag};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write every retained draw to `trace.csv`.
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub counts: PathBuf,
    pub adjacency: PathBuf,
    /// `area_id,population`; a zero covariate is used when absent.
    pub covariate: Option<PathBuf>,
    /// Reserve the final period for forecast evaluation.
    #[serde(default)]
    pub holdout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: ModelKind,
    #[serde(default)]
    pub range: StationaryRange,
}

impl ModelConfig {
    pub fn variant(&self) -> CliResult<ModelVariant> {
        ModelVariant::new(self.variant, self.range).ingest()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    /// Seed for predictive replicates; the sampler seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    #[serde(default)]
    pub omega: OmegaForecast,
    /// The fit's sampler seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    /// Used for the one-step scores when a holdout is reserved.
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Shared by `forecast`, `score` and `diag`, which work on a fitted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: PathBuf,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    /// PSRF above this value is reported as a convergence warning.
    #[serde(default = "default_psrf_threshold")]
    pub psrf_threshold: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

pub fn default_psrf_threshold() -> f64 {
    1.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub runs: Vec<PathBuf>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses `--a.b=value` into a dotted key and a TOML value. Values that do
/// not parse as TOML are taken as strings.
pub fn parse_override(arg: &str) -> anyhow::Result<(String, Value)> {
    let body = arg.strip_prefix("--").unwrap_or(arg);
    let (key, raw) = body
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{arg}' must look like --key=value"))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        bail!("override '{arg}' has an empty key segment");
    }
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> anyhow::Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("cannot override '{key}': '{p}' is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn resolve(base: &Path, value: &mut Value) {
    match value {
        Value::String(s) => {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).to_string_lossy().into_owned();
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| resolve(base, v)),
        _ => {}
    }
}

/// Makes the values at the dotted `keys` absolute against `base`.
pub fn resolve_paths(table: &mut Table, keys: &[&str], base: &Path) {
    for key in keys {
        let mut parts = key.split('.').peekable();
        let mut cur = &mut *table;
        while let Some(p) = parts.next() {
            if parts.peek().is_none() {
                if let Some(v) = cur.get_mut(p) {
                    resolve(base, v);
                }
                break;
            }
            match cur.get_mut(p).and_then(Value::as_table_mut) {
                Some(t) => cur = t,
                None => break,
            }
        }
    }
}

fn cwd() -> CliResult<PathBuf> {
    std::env::current_dir().context("reading the working directory").ingest()
}

/// A loaded command configuration.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    /// Present when the config came from a manifest.
    pub manifest: Option<Manifest>,
}

/// Reads a config or manifest file, applies overrides and deserialises it.
pub fn load<T: DeserializeOwned>(
    command: &str,
    path: Option<&Path>,
    overrides: &[(String, Value)],
    path_keys: &[&str],
) -> CliResult<Loaded<T>> {
    let mut table = Table::new();
    let mut manifest = None;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .ingest()?;
        let parsed: Table = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .ingest()?;
        if let Some(m) = Manifest::from_table(&parsed).ingest()? {
            if m.command != command {
                return Err(anyhow!(
                    "manifest {} was written by '{}', not '{command}'",
                    path.display(),
                    m.command
                ))
                .ingest();
            }
            table = m.config.clone();
            manifest = Some(m);
        } else {
            table = parsed;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let base = if base.as_os_str().is_empty() { cwd()? } else { base };
            resolve_paths(&mut table, path_keys, &base);
        }
    }
    for (key, value) in overrides {
        set_dotted(&mut table, key, value.clone()).ingest()?;
    }
    resolve_paths(&mut table, path_keys, &cwd()?);
    let config = table
        .try_into::<T>()
        .with_context(|| format!("invalid {command} configuration"))
        .ingest()?;
    Ok(Loaded { config, manifest })
}

/// Canonical table of a typed config with the output directory removed, as
/// embedded in manifests and hashed.
pub fn canonical<T: Serialize>(config: &T) -> CliResult<Table> {
    let mut table = Table::try_from(config).context("serialising configuration").ingest()?;
    if let Some(out) = table.get_mut("output").and_then(Value::as_table_mut) {
        out.remove("dir");
    }
    Ok(table)
}

/// The output directory from the config, created if needed.
pub fn output_dir(output: &OutputConfig, fallback: Option<&Path>) -> CliResult<PathBuf> {
    let dir = output
        .dir
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .ok_or_else(|| anyhow!("no output directory: set output.dir or pass --out"))
        .ingest()?;
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .ingest()?;
    Ok(dir)
}
