//! On-disk formats: checkpoints (JSON manifest plus little-endian f32
//! blob), binary game logs, TOML run configs, versioned JSON summaries, and
//! CSV reports.

mod checkpoint;
mod dataset;
pub mod report;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, RoutingIndex, TensorEntry};
pub use dataset::{load_datasets, read_datasets, save_datasets, write_datasets};

use crate::error::{Error, Result};
use crate::pipeline::RunConfig;

/// Version of the checkpoint and dataset binary formats.
pub const FORMAT_VERSION: u32 = 1;
/// Version of the JSON summary envelope and its payloads.
pub const SUMMARY_VERSION: u32 = 1;

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn not_found(path: &Path, e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    }
}

pub(crate) fn read_artifact(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| not_found(path, e))
}

pub(crate) fn open_artifact(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| not_found(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
        _ => Error::Io(e),
    })?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(path, config_to_toml(cfg)?.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Envelope of every JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the run config in canonical TOML form.
    pub config_sha256: String,
    pub result: T,
}

impl<T> Summary<T> {
    pub fn new(command: &str, cfg: &RunConfig, result: T) -> Result<Self> {
        Ok(Self {
            schema_version: SUMMARY_VERSION,
            command: command.into(),
            seed: cfg.seed,
            config_sha256: sha256_hex(config_to_toml(cfg)?.as_bytes()),
            result,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_artifact(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Reads a summary, rejecting other schema versions.
pub fn read_summary<T: DeserializeOwned>(path: &Path) -> Result<Summary<T>> {
    let s: Summary<T> = read_json(path)?;
    if s.schema_version != SUMMARY_VERSION {
        return Err(Error::Format(format!(
            "{} has summary schema {}, expected {SUMMARY_VERSION}",
            path.display(),
            s.schema_version
        )));
    }
    Ok(s)
}

pub fn write_csv<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_and_summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            seed: 77,
            ..RunConfig::default()
        };
        let path = dir.path().join("run.toml");
        save_config(&path, &cfg).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
        assert!(matches!(
            load_config(&dir.path().join("nope.toml")),
            Err(Error::Config(_))
        ));
        fs::write(&path, "seed = \"x\"").unwrap();
        assert!(matches!(load_config(&path), Err(Error::Config(_))));

        let s = Summary::new("probe", &cfg, vec![1.5, 2.0]).unwrap();
        let sp = dir.path().join("s.json");
        write_json(&sp, &s).unwrap();
        assert_eq!(read_summary::<Vec<f64>>(&sp).unwrap(), s);
        let mut old = s.clone();
        old.schema_version = 0;
        write_json(&sp, &old).unwrap();
        assert!(matches!(read_summary::<Vec<f64>>(&sp), Err(Error::Format(_))));
        assert!(matches!(
            read_summary::<Vec<f64>>(&dir.path().join("x.json")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
