//! CSV reports and run manifests.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::RunRow;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Data(format!("{}: {e}", path.display()))
    }
}

pub const ARTIFACT_VERSION: &str = concat!("mrcdm ", env!("CARGO_PKG_VERSION"));

/// Everything needed to rerun a command bit-exactly, plus what it produced.
/// Passing a manifest back as `--config` reruns with the same settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<String>,
    pub dataset_id: String,
    pub artifact_version: String,
    pub wall_clock_secs: f64,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub reports: Vec<RunRow>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, dataset_id: &str) -> Self {
        Self {
            command: command.into(),
            config_hash: config.hash(),
            config: config.clone(),
            seeds: config.seeds.clone(),
            variants: Vec::new(),
            dataset_id: dataset_id.into(),
            artifact_version: ARTIFACT_VERSION.into(),
            wall_clock_secs: 0.0,
            outputs: Vec::new(),
            reports: Vec::new(),
        }
    }

    pub fn finish(&mut self, elapsed: Duration) {
        self.wall_clock_secs = elapsed.as_secs_f64();
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
