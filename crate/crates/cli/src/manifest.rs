//! Run manifests: the effective configuration plus hashes of it and of the
//! input data. Passing a manifest as `--config` re-runs the command.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Table;

use crate::error::{CliResult, Tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    command: String,
    version: String,
    config_hash: String,
    data_hash: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    manifest: Header,
    config: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub data_hash: Option<String>,
    pub seed: Option<u64>,
    pub config: Table,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash over the contents of several files, each prefixed by its length so
/// that moving bytes between files changes the digest.
pub fn hash_files(paths: &[&Path]) -> CliResult<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .ingest()?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn file_name(command: &str) -> String {
    format!("{command}_manifest.toml")
}

impl Manifest {
    pub fn new(command: &str, config: Table, data_hash: Option<String>, seed: Option<u64>) -> Self {
        let text = toml::to_string(&config).expect("tables serialise");
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(text.as_bytes()),
            data_hash,
            seed,
            config,
        }
    }

    /// `Some` when the table is a manifest, `None` for a plain config.
    pub fn from_table(table: &Table) -> anyhow::Result<Option<Self>> {
        if !table.contains_key("manifest") {
            return Ok(None);
        }
        let file: ManifestFile = table.clone().try_into().context("malformed manifest")?;
        let m = Manifest {
            command: file.manifest.command,
            version: file.manifest.version,
            config_hash: file.manifest.config_hash,
            data_hash: file.manifest.data_hash,
            seed: file.manifest.seed,
            config: file.config,
        };
        let expected = Manifest::new(&m.command, m.config.clone(), None, None).config_hash;
        if expected != m.config_hash {
            bail!("manifest config hash does not match its embedded configuration");
        }
        Ok(Some(m))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))
            .ingest()?;
        let table: Table = toml::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))
            .ingest()?;
        Manifest::from_table(&table)
            .and_then(|m| m.with_context(|| format!("{} is not a manifest", path.display())))
            .ingest()
    }

    pub fn to_toml(&self) -> String {
        let file = ManifestFile {
            manifest: Header {
                command: self.command.clone(),
                version: self.version.clone(),
                config_hash: self.config_hash.clone(),
                data_hash: self.data_hash.clone(),
                seed: self.seed,
            },
            config: self.config.clone(),
        };
        toml::to_string(&file).expect("manifest serialises")
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(file_name(&self.command));
        std::fs::write(&path, self.to_toml())
            .with_context(|| format!("writing {}", path.display()))
            .ingest()?;
        Ok(path)
    }

    /// Fails when data hashed now differs from what the manifest recorded.
    pub fn check_data(&self, data_hash: &str) -> CliResult<()> {
        match &self.data_hash {
            Some(h) if h != data_hash => Err(anyhow::anyhow!(
                "input data changed since the manifest was written ({h} vs {data_hash})"
            ))
            .ingest(),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip_and_tamper_check() {
        let config: Table = toml::from_str("[sampler]\nseed = 4\n").unwrap();
        let m = Manifest::new("fit", config, Some("abc".into()), Some(4));
        let table: Table = toml::from_str(&m.to_toml()).unwrap();
        assert_eq!(Manifest::from_table(&table).unwrap().unwrap(), m);
        let mut tampered = table.clone();
        tampered["config"]["sampler"]["seed"] = toml::Value::Integer(5);
        assert!(Manifest::from_table(&tampered).is_err());
        assert!(Manifest::from_table(&Table::new()).unwrap().is_none());
        assert!(m.check_data("abc").is_ok());
        assert_eq!(m.check_data("def").unwrap_err().code, crate::error::exit::INGEST);
    }
}
