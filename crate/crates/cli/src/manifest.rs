use std::path::{Path, PathBuf};

use conc_lab::io::{write_json, write_string};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run. Deliberately free of timestamps,
/// host names and thread counts so that reruns produce the same manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub config_schema_version: u32,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    /// How member and auxiliary streams derive from the master seed.
    pub seed_scheme: &'static str,
    /// Master seeds of independent ensembles drawn within the run.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub derived_seeds: Vec<DerivedSeed>,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivedSeed {
    pub role: String,
    pub seed: u64,
}

pub const SEED_SCHEME: &str =
    "ChaCha12 keyed by the master seed, one stream per member index; auxiliary streams use member ^ 0x9E3779B97F4A7C15";

/// Collects the files of one run under a single output directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        write_string(&self.dir.join(name), contents)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf, CliError> {
        manifest.outputs = self.files;
        let path = self.dir.join("manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
