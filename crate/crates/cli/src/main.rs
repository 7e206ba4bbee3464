//! `conc-lab`: configuration-driven experiment runner.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical or
//! certification failure, 4 non-convergence.

mod commands;
mod config;
mod error;
mod manifest;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conc_lab::TimeGrid;
use serde::Serialize;

use crate::config::{
    load, CertifyConfig, ConcentrateConfig, ConcentrateMode, Layout, LocaltimesConfig, ModelConfig, SimulateConfig,
    TransportConfig, SCHEMA_VERSION,
};
use crate::error::CliError;
use crate::manifest::{sha256_hex, Manifest, Outputs, SEED_SCHEME};

#[derive(Parser, Debug)]
#[command(name = "conc-lab", version, about = "Concentration experiments for reflected and rank-based diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON configuration file (`schema_version: 1`); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "conc-lab-out")]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    /// Number of particles or coordinates. Drift vectors from a config file
    /// must already have this length; built-in defaults are replaced by zeros.
    #[arg(long)]
    n: Option<usize>,
    /// Ensemble size.
    #[arg(long)]
    paths: Option<usize>,
    /// Time horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Grid step.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutArg {
    Long,
    Shards,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an ensemble of a Brownian or rank-based model.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// One long CSV, or one CSV per member.
        #[arg(long, value_enum)]
        layout: Option<LayoutArg>,
    },
    /// Boundary local times of a rank-based ensemble.
    Localtimes {
        #[command(flatten)]
        sim: SimArgs,
        /// Also write every local-time path.
        #[arg(long)]
        write_paths: bool,
    },
    /// Lipschitz certificate of a Skorokhod map.
    Certify {
        /// Dimension of the ordered chamber.
        #[arg(long)]
        n: Option<usize>,
        /// JSON polyhedral domain `{dim, faces: [{normal, offset, direction}]}`.
        #[arg(long)]
        domain: Option<PathBuf>,
    },
    /// Empirical transportation-cost inequality against Wiener measure.
    Transport {
        #[command(flatten)]
        sim: SimArgs,
        /// Wasserstein order.
        #[arg(long)]
        p: Option<u32>,
    },
    /// Tail reports of Lipschitz functionals.
    Concentrate {
        /// Maximal boundary local time of the rank model (the default mode).
        #[arg(long, conflicts_with = "martingale")]
        thm1: bool,
        /// Running maximum of a Brownian coordinate.
        #[arg(long)]
        martingale: bool,
        #[command(flatten)]
        sim: SimArgs,
        /// Deviations are counted at `r n^exponent`.
        #[arg(long)]
        scale_exponent: Option<f64>,
    },
    /// Run the analytic-oracle suite.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate { .. } => "simulate",
            Self::Localtimes { .. } => "localtimes",
            Self::Certify { .. } => "certify",
            Self::Transport { .. } => "transport",
            Self::Concentrate { .. } => "concentrate",
            Self::Selftest => "selftest",
        }
    }
}

fn apply_grid(grid: &mut TimeGrid, sim: &SimArgs) -> Result<(), CliError> {
    if sim.horizon.is_some() || sim.dt.is_some() {
        *grid = TimeGrid::new(sim.horizon.unwrap_or(grid.horizon()), sim.dt.unwrap_or(grid.dt()))?;
    }
    Ok(())
}

/// Resizes a drift vector for `--n`: defaults become zeros, while vectors
/// read from a file must already match.
fn resize_drifts(v: &mut Vec<f64>, x0: &mut Option<Vec<f64>>, n: usize, from_file: bool) -> Result<(), CliError> {
    if v.len() == n {
        return Ok(());
    }
    if from_file {
        return Err(CliError::Config(format!("--n {n} conflicts with a configured drift vector of length {}", v.len())));
    }
    *v = vec![0.0; n];
    *x0 = None;
    Ok(())
}

fn resize_model(model: &mut ModelConfig, n: usize, from_file: bool) -> Result<(), CliError> {
    match model {
        ModelConfig::Brownian { drift, sigma, x0 } => {
            resize_drifts(drift, x0, n, from_file)?;
            if sigma.as_ref().is_some_and(|s| s.len() != n) {
                *sigma = None;
            }
            Ok(())
        }
        ModelConfig::Rank { deltas, x0 } => resize_drifts(deltas, x0, n, from_file),
    }
}

fn thread_pool() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CONC_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CONC_LAB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn effective<T: Serialize>(cfg: &T) -> Result<(serde_json::Value, String), CliError> {
    let value = serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&value).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((value, sha256_hex(canonical.as_bytes())))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    thread_pool()?;
    let cfg_path = cli.global.config.as_deref();
    let from_file = cfg_path.is_some();
    let seed = cli.global.seed;
    let mut out = Outputs::new(&cli.global.out);
    let command = cli.command.name();

    let (config_value, summary) = match cli.command {
        Command::Simulate { sim, layout } => {
            let mut c: SimulateConfig = load(cfg_path)?;
            if let Some(n) = sim.n {
                resize_model(&mut c.model, n, from_file)?;
            }
            apply_common(&mut c.grid, &mut c.n_paths, &mut c.seed, &sim, seed)?;
            if let Some(l) = layout {
                c.layout = match l {
                    LayoutArg::Long => Layout::Long,
                    LayoutArg::Shards => Layout::Shards,
                };
            }
            (effective(&c)?, commands::simulate(&c, &mut out)?)
        }
        Command::Localtimes { sim, write_paths } => {
            let mut c: LocaltimesConfig = load(cfg_path)?;
            if let Some(n) = sim.n {
                resize_drifts(&mut c.deltas, &mut c.x0, n, from_file)?;
            }
            apply_common(&mut c.grid, &mut c.n_paths, &mut c.seed, &sim, seed)?;
            c.write_paths |= write_paths;
            (effective(&c)?, commands::localtimes(&c, &mut out)?)
        }
        Command::Certify { n, domain } => {
            let mut c: CertifyConfig = load(cfg_path)?;
            if let Some(n) = n {
                c.n = Some(n);
                c.domain = None;
            }
            if let Some(d) = domain {
                c.domain = Some(commands::read_domain(&d)?);
            }
            (effective(&c)?, commands::certify(&c, &mut out)?)
        }
        Command::Transport { sim, p } => {
            let mut c: TransportConfig = load(cfg_path)?;
            if let Some(n) = sim.n {
                resize_model(&mut c.target, n, from_file)?;
            }
            apply_common(&mut c.grid, &mut c.n_paths, &mut c.seed, &sim, seed)?;
            if let Some(p) = p {
                c.p = p;
            }
            (effective(&c)?, commands::transport(&c, &mut out)?)
        }
        Command::Concentrate {
            thm1,
            martingale,
            sim,
            scale_exponent,
        } => {
            let mut c: ConcentrateConfig = load(cfg_path)?;
            if thm1 {
                c.mode = ConcentrateMode::MaxLocalTime;
            }
            if martingale {
                c.mode = ConcentrateMode::Martingale;
            }
            if let Some(n) = sim.n {
                if c.deltas.as_ref().is_some_and(|d| d.len() != n) {
                    return Err(CliError::Config(format!("--n {n} conflicts with the configured deltas")));
                }
                c.n = n;
            }
            apply_common(&mut c.grid, &mut c.n_paths, &mut c.seed, &sim, seed)?;
            if let Some(e) = scale_exponent {
                c.scale_exponent = e;
            }
            (effective(&c)?, commands::concentrate(&c, &mut out)?)
        }
        Command::Selftest => {
            if from_file {
                return Err(CliError::Config("selftest takes no configuration".into()));
            }
            let report = selftest::run();
            for c in &report.checks {
                println!("selftest {:<34} {} - {}", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
            }
            out.write_json("selftest.json", &report)?;
            (
                effective(&serde_json::json!({ "schema_version": SCHEMA_VERSION }))?,
                commands::RunSummary {
                    master_seed: None,
                    derived_seeds: Vec::new(),
                    ok: report.failed == 0,
                },
            )
        }
    };

    let (config, config_sha256) = config_value;
    let path = out.finish(Manifest {
        tool: "conc-lab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: conc_lab::VERSION,
        command: command.to_string(),
        config_schema_version: SCHEMA_VERSION,
        config_sha256,
        config,
        master_seed: summary.master_seed,
        seed_scheme: SEED_SCHEME,
        derived_seeds: summary.derived_seeds,
        outputs: Vec::new(),
    })?;
    eprintln!("wrote {}", path.display());
    Ok(summary.ok)
}

fn apply_common(grid: &mut TimeGrid, n_paths: &mut usize, cfg_seed: &mut u64, sim: &SimArgs, seed: Option<u64>) -> Result<(), CliError> {
    apply_grid(grid, sim)?;
    if let Some(p) = sim.paths {
        *n_paths = p;
    }
    if let Some(s) = seed {
        *cfg_seed = s;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("conc-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
