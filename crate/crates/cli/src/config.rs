//! JSON experiment configurations. Every file carries `schema_version` and
//! unknown keys are rejected before any computation starts.

use std::fs;
use std::path::Path;

use conc_lab::concentration::{base_threshold, default_r_grid};
use conc_lab::path::{PathMetric, TimeGrid};
use conc_lab::skorokhod::{LocalTimeMethod, PolyhedralDomain};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn default_grid() -> TimeGrid {
    TimeGrid::new(1.0, 1e-3).expect("valid default grid")
}

fn default_paths() -> usize {
    1000
}

fn default_seed() -> u64 {
    20_240_601
}

fn schema() -> u32 {
    SCHEMA_VERSION
}

/// Driving model of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Independent coordinates `dX_i = mu_i dt + sigma_i dW_i`.
    Brownian {
        drift: Vec<f64>,
        #[serde(default)]
        sigma: Option<Vec<f64>>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    /// Rank-based particles, drift `deltas[j]` for the particle ranked `j`.
    Rank {
        deltas: Vec<f64>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        match self {
            Self::Brownian { drift, .. } => drift.len(),
            Self::Rank { deltas, .. } => deltas.len(),
        }
    }

    pub fn x0(&self) -> Vec<f64> {
        match self {
            Self::Brownian { x0, .. } | Self::Rank { x0, .. } => x0.clone().unwrap_or_else(|| vec![0.0; self.dim()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One long file `member,time,x1..`.
    Long,
    /// One `time,x1..` file per member.
    Shards,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default = "default_grid")]
    pub grid: TimeGrid,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_layout")]
    pub layout: Layout,
}

fn default_layout() -> Layout {
    Layout::Long
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelConfig::Rank {
                deltas: vec![1.0, 0.0, -1.0],
                x0: None,
            },
            grid: default_grid(),
            n_paths: 100,
            seed: default_seed(),
            layout: Layout::Long,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocaltimesConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid: TimeGrid,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: LocalTimeMethod,
    /// Write every local-time path, not only the terminal values.
    #[serde(default)]
    pub write_paths: bool,
}

impl Default for LocaltimesConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            deltas: vec![0.0; 3],
            x0: None,
            grid: default_grid(),
            n_paths: default_paths(),
            seed: default_seed(),
            method: LocalTimeMethod::default(),
            write_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    /// Chamber dimension; ignored when `domain` is given.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub domain: Option<PolyhedralDomain>,
    /// Positive vector with `Qu < u`, required for non-chamber domains.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: None,
            domain: None,
            u: None,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzInputs {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k: f64,
    #[serde(default = "one")]
    pub kappa: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LipschitzInputs {
    fn default() -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k: 0.0,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    /// Target law `Q`; the reference `P` is driftless unit-variance Brownian
    /// motion of the same dimension started at the same point.
    pub target: ModelConfig,
    #[serde(default = "default_grid_coarse")]
    pub grid: TimeGrid,
    #[serde(default = "default_transport_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "two")]
    pub p: u32,
    #[serde(default = "default_metric")]
    pub metric: PathMetric,
    #[serde(default)]
    pub constants: LipschitzInputs,
    /// Bisection tolerance of the Orlicz norm of the reference's terminal
    /// increments.
    #[serde(default = "default_orlicz_tol")]
    pub orlicz_tol: f64,
    #[serde(default)]
    pub write_cost_matrix: bool,
}

fn default_grid_coarse() -> TimeGrid {
    TimeGrid::new(1.0, 1e-2).expect("valid default grid")
}

fn default_transport_paths() -> usize {
    256
}

fn two() -> u32 {
    2
}

fn default_metric() -> PathMetric {
    PathMetric::AveragedUniform
}

fn default_orlicz_tol() -> f64 {
    1e-10
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            target: ModelConfig::Rank {
                deltas: vec![1.0, 0.0, -1.0],
                x0: None,
            },
            grid: default_grid_coarse(),
            n_paths: default_transport_paths(),
            seed: default_seed(),
            p: 2,
            metric: default_metric(),
            constants: LipschitzInputs::default(),
            orlicz_tol: default_orlicz_tol(),
            write_cost_matrix: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrateMode {
    /// Tails of the maximal boundary local time of the rank model.
    MaxLocalTime,
    /// Tails of `sup_t |W_1(t)|` for an `n`-dimensional Brownian motion.
    Martingale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrateConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    pub mode: ConcentrateMode,
    pub n: usize,
    /// Rank drifts; zeros when absent.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid: TimeGrid,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    /// Deviations are counted at `r n^scale_exponent`.
    #[serde(default = "default_exponent")]
    pub scale_exponent: f64,
    #[serde(default)]
    pub method: LocalTimeMethod,
}

fn default_exponent() -> f64 {
    2.5
}

impl Default for ConcentrateConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode: ConcentrateMode::MaxLocalTime,
            n: 2,
            deltas: None,
            grid: default_grid(),
            n_paths: default_paths(),
            seed: default_seed(),
            r_grid: None,
            scale_exponent: default_exponent(),
            method: LocalTimeMethod::default(),
        }
    }
}

impl ConcentrateConfig {
    pub fn r_grid(&self) -> Vec<f64> {
        self.r_grid.clone().unwrap_or_else(|| default_r_grid(base_threshold() + 2.75, 12))
    }
}

/// Reads `path` into `T`, or returns `T::default()` when no path is given.
pub fn load<T: DeserializeOwned + Default + Versioned>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(CliError::Config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(CliError::Config("config must set \"schema_version\": 1".into())),
    }
    let cfg: T = serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    debug_assert_eq!(cfg.schema_version(), SCHEMA_VERSION);
    Ok(cfg)
}

pub trait Versioned {
    fn schema_version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
        })*
    };
}

versioned!(SimulateConfig, LocaltimesConfig, CertifyConfig, TransportConfig, ConcentrateConfig);
