//! Output directory, input/output hashing and the per-run manifest.

use crate::config::RunConfig;
use crate::read_input;
use anyhow::{Context, Result};
use cascade_lab::cascade::{read_dataset, Dataset};
use cascade_lab::grid::{ieee118, parse_case};
use cascade_lab::{Grid, InteractionModel};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    config_hash: String,
    seeds: &'a BTreeMap<String, u64>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
    wall_time_s: f64,
}

/// One CLI invocation: records what was read and written.
pub struct Run {
    pub command: &'static str,
    pub config: RunConfig,
    started: Instant,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn start(command: &'static str, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
        let mut seeds = BTreeMap::new();
        seeds.insert("seed".to_string(), config.seed);
        Ok(Run {
            command,
            config: config.clone(),
            started: Instant::now(),
            seeds,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record_seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Reads an input artifact and records its hash.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let text = read_input(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn grid(&mut self) -> Result<Grid> {
        match self.config.grid.clone() {
            Some(path) => {
                let text = self.read(&path)?;
                Ok(parse_case(&text, &path)?)
            }
            None => Ok(ieee118()),
        }
    }

    /// Loads a dataset and checks it was simulated on `grid`.
    pub fn dataset(&mut self, path: &Path, grid: &Grid) -> Result<(Dataset, String)> {
        let text = self.read(path)?;
        let data = read_dataset(text.as_bytes()).with_context(|| format!("reading {}", path.display()))?;
        if data.header.grid_hash != grid.fingerprint() {
            anyhow::bail!(crate::InvalidConfig(format!("{} was simulated on a different grid", path.display())));
        }
        Ok((data, sha256_hex(text.as_bytes())))
    }

    pub fn model(&mut self, path: &Path) -> Result<InteractionModel> {
        let text = self.read(path)?;
        InteractionModel::from_json_str(&text).with_context(|| format!("reading {}", path.display()))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.config.out.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write(name, &bytes)
    }

    /// A plain numeric matrix without header.
    pub fn write_matrix<T: ToString>(&mut self, name: &str, rows: &[Vec<T>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<()> {
        let config_hash = sha256_hex(&serde_json::to_vec(&self.config)?);
        let manifest = Manifest {
            command: self.command,
            config: &self.config,
            config_hash,
            seeds: &self.seeds,
            inputs: &self.inputs,
            outputs: &self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.config.out.join(format!("{}.manifest.json", self.command));
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
