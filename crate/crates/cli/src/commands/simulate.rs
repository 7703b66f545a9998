//! `simulate`: draw a synthetic panel and write it in the ingest formats.

use epimix::io::{write_adjacency, write_counts, write_covariate, write_index_map};
use epimix::sampler::ParamLayout;
use epimix::simulate::{simulate_panel, Scenario, Simulation};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::config::{canonical, output_dir, Loaded, OutputConfig};
use crate::error::{exit, CliResult, Tag};
use crate::manifest::Manifest;
use crate::output::{num, write_csv, write_text};

/// A scenario at the top level plus an `[output]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table", into = "Table")]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub output: OutputConfig,
}

impl TryFrom<Table> for SimulateConfig {
    type Error = String;

    fn try_from(mut table: Table) -> Result<Self, String> {
        let output = match table.remove("output") {
            Some(v) => v.try_into().map_err(|e| format!("[output]: {e}"))?,
            None => OutputConfig::default(),
        };
        let scenario = table.try_into().map_err(|e| format!("{e}"))?;
        Ok(Self { scenario, output })
    }
}

impl From<SimulateConfig> for Table {
    fn from(cfg: SimulateConfig) -> Table {
        let mut table = Table::try_from(&cfg.scenario).expect("scenarios serialise");
        table.insert(
            "output".into(),
            Value::try_from(&cfg.output).expect("output sections serialise"),
        );
        table
    }
}

pub fn cmd_simulate(loaded: Loaded<SimulateConfig>) -> CliResult<i32> {
    let cfg = &loaded.config;
    let sim = simulate_panel(&cfg.scenario).ingest()?;
    let dir = output_dir(&cfg.output, None)?;
    let ids = &sim.area_ids;
    write_counts(&dir.join("counts.csv"), ids, &sim.data).ingest()?;
    write_covariate(&dir.join("covariate.csv"), ids, &sim.populations).ingest()?;
    write_adjacency(&dir.join("adjacency.txt"), ids, &sim.graph).ingest()?;
    write_index_map(&dir.join("index_map.csv"), ids).ingest()?;
    write_truth(&dir, &cfg.scenario, &sim)?;
    write_text(&dir.join("fit.toml"), &fit_template(&cfg.scenario))?;
    Manifest::new("simulate", canonical(cfg)?, None, Some(cfg.scenario.seed)).write(&dir)?;
    Ok(exit::SUCCESS)
}

/// `truth.csv` in the posterior summary's parameter names, plus the
/// held-out period.
fn write_truth(dir: &std::path::Path, scenario: &Scenario, sim: &Simulation) -> CliResult<()> {
    let state = &sim.truth;
    let layout = ParamLayout::new(scenario.variant, state.n_areas(), state.n_periods());
    let values = layout.flatten(state);
    let mut rows: Vec<Vec<String>> = layout
        .names()
        .iter()
        .zip(&values)
        .map(|(n, v)| vec![n.clone(), num(*v)])
        .collect();
    let t = state.n_periods();
    for (i, d) in sim.holdout.delta.iter().enumerate() {
        rows.push(vec![format!("delta[{i},{t}]"), num(*d)]);
    }
    if let Some(w) = sim.holdout.omega {
        rows.push(vec![format!("omega[{t}]"), num(w)]);
    }
    write_csv(&dir.join("truth.csv"), &["name", "value"], rows)
}

fn fit_template(scenario: &Scenario) -> String {
    let range = Value::try_from(scenario.range).expect("ranges serialise");
    format!(
        "[data]\ncounts = \"counts.csv\"\nadjacency = \"adjacency.txt\"\ncovariate = \"covariate.csv\"\nholdout = true\n\n\
         [model]\nvariant = \"{}\"\nrange = {range}\n\n\
         [sampler]\nseed = {}\n\n\
         [output]\ndir = \"fit-{}\"\n",
        scenario.variant, scenario.seed, scenario.variant
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_splits_output_from_scenario() {
        let table: Table = toml::from_str("seed = 9\nn_periods = 12\n[output]\ndir = \"/x\"\n").unwrap();
        let cfg: SimulateConfig = table.try_into().unwrap();
        assert_eq!(cfg.scenario.seed, 9);
        assert_eq!(cfg.scenario.n_periods, 12);
        assert_eq!(cfg.output.dir.as_deref(), Some(std::path::Path::new("/x")));
        let back = Table::from(cfg.clone());
        assert_eq!(SimulateConfig::try_from(back).unwrap(), cfg);
    }

    #[test]
    fn unknown_scenario_keys_are_rejected() {
        let table: Table = toml::from_str("sed = 9\n").unwrap();
        assert!(SimulateConfig::try_from(table).is_err());
    }
}
