use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use conc_lab::concentration::{chi_tail_report, martingale_concentration_check, thm1_experiment, LipschitzFamily, Thm1Settings};
use conc_lab::geometry::{build_matrices, certificate, certificate_with_u, neumann_u_vector, spacing_min_singular, spectral_radius, DEFAULT_SPECTRAL_TOL};
use conc_lab::io::{ensemble_to_csv, multipath_to_csv, tail_report_to_csv};
use conc_lab::sde::{euler_maruyama, simulate_rank_model, DiffusionSpec, DriftSpec, RankModelSpec, SdeSystem, SimConfig};
use conc_lab::skorokhod::{rank_local_times, PolyhedralDomain};
use conc_lab::stats::mean;
use conc_lab::transport::{cost_matrix, orlicz_norm, qtci_constants, qtci_verify, rank_model_entropy, wasserstein_exact};
use conc_lab::{Ensemble, Error};
use serde::Serialize;

use crate::config::{CertifyConfig, ConcentrateConfig, ConcentrateMode, Layout, LocaltimesConfig, ModelConfig, SimulateConfig, TransportConfig};
use crate::error::CliError;
use crate::manifest::{DerivedSeed, Outputs};

/// What a command hands back to the runner for the manifest.
pub struct RunSummary {
    pub master_seed: Option<u64>,
    pub derived_seeds: Vec<DerivedSeed>,
    /// `false` when a check-style command ran to completion but reported a failure.
    pub ok: bool,
}

impl RunSummary {
    fn seeded(seed: u64) -> Self {
        Self {
            master_seed: Some(seed),
            derived_seeds: Vec::new(),
            ok: true,
        }
    }
}

fn check_dim(x0: &[f64], n: usize) -> Result<(), CliError> {
    if x0.len() != n {
        return Err(CliError::Config(format!("x0 has length {}, model has dimension {n}", x0.len())));
    }
    Ok(())
}

/// Simulates a model; rank models also return their gap process.
fn simulate_model(model: &ModelConfig, cfg: &SimConfig) -> Result<(Ensemble, Option<Ensemble>), CliError> {
    let x0 = model.x0();
    check_dim(&x0, model.dim())?;
    match model {
        ModelConfig::Brownian { drift, sigma, .. } => {
            let sigma = sigma.clone().unwrap_or_else(|| vec![1.0; drift.len()]);
            if sigma.len() != drift.len() {
                return Err(CliError::Config(format!("sigma has length {}, drift has length {}", sigma.len(), drift.len())));
            }
            let diffusions = sigma.iter().map(|&s| DiffusionSpec::constant(s)).collect::<Result<Vec<_>, Error>>()?;
            let drifts = drift.iter().map(|&m| DriftSpec::constant(m)).collect();
            let sys = SdeSystem::new(drifts, diffusions, x0)?;
            Ok((euler_maruyama(&sys, cfg)?, None))
        }
        ModelConfig::Rank { deltas, .. } => {
            let spec = RankModelSpec::new(deltas.clone(), x0)?;
            let re = simulate_rank_model(&spec, cfg)?;
            Ok((re.raw(), re.gaps()))
        }
    }
}

fn write_ensemble(out: &mut Outputs, stem: &str, e: &Ensemble, layout: Layout) -> Result<(), CliError> {
    match layout {
        Layout::Long => out.write(&format!("{stem}.csv"), &ensemble_to_csv(e)),
        Layout::Shards => {
            for (j, m) in e.members().iter().enumerate() {
                out.write(&format!("{stem}/member_{j:06}.csv"), &multipath_to_csv(m))?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EnsembleSummary {
    n_paths: usize,
    dim: usize,
    steps: usize,
    terminal_mean: Vec<f64>,
}

fn summarize(e: &Ensemble) -> EnsembleSummary {
    EnsembleSummary {
        n_paths: e.len(),
        dim: e.dim(),
        steps: e.grid().steps(),
        terminal_mean: (0..e.dim()).map(|i| mean(&e.terminal(i))).collect(),
    }
}

pub fn simulate(cfg: &SimulateConfig, out: &mut Outputs) -> Result<RunSummary, CliError> {
    let sim = SimConfig::new(cfg.grid, cfg.n_paths, cfg.seed)?;
    let (paths, gaps) = simulate_model(&cfg.model, &sim)?;
    write_ensemble(out, "paths", &paths, cfg.layout)?;
    if let Some(g) = &gaps {
        write_ensemble(out, "gaps", g, cfg.layout)?;
    }
    out.write_json("summary.json", &summarize(&paths))?;
    Ok(RunSummary::seeded(cfg.seed))
}

fn relabel_header(csv: String, prefix: &str, names: impl Iterator<Item = String>) -> String {
    let body = csv.split_once('\n').map_or("", |(_, b)| b);
    let mut h = String::from(prefix);
    for n in names {
        h.push(',');
        h.push_str(&n);
    }
    h.push('\n');
    h + body
}

#[derive(Serialize)]
struct LocalTimeSummary {
    n_paths: usize,
    boundaries: usize,
    mean_terminal: Vec<f64>,
    mean_max_terminal: f64,
}

pub fn localtimes(cfg: &LocaltimesConfig, out: &mut Outputs) -> Result<RunSummary, CliError> {
    let n = cfg.deltas.len();
    if n < 2 {
        return Err(CliError::Config("local times need at least two particles".into()));
    }
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    check_dim(&x0, n)?;
    let spec = RankModelSpec::new(cfg.deltas.clone(), x0)?;
    let sim = SimConfig::new(cfg.grid, cfg.n_paths, cfg.seed)?;
    let re = simulate_rank_model(&spec, &sim)?;
    let lt = rank_local_times(&re, &PolyhedralDomain::chamber(n)?, cfg.method)?
        .ok_or_else(|| CliError::Config("local times need at least two particles".into()))?;
    let names = || (1..n).map(|i| format!("l{i}"));
    let mut csv = String::new();
    csv.push_str("member");
    for nm in names() {
        csv.push(',');
        csv.push_str(&nm);
    }
    csv.push('\n');
    let mut maxima = Vec::with_capacity(lt.len());
    for (j, m) in lt.members().iter().enumerate() {
        let _ = write!(csv, "{j}");
        let mut mx = f64::NEG_INFINITY;
        for c in m.components() {
            let v = *c.last().expect("nonempty path");
            mx = mx.max(v);
            let _ = write!(csv, ",{v}");
        }
        maxima.push(mx);
        csv.push('\n');
    }
    out.write("terminal_local_times.csv", &csv)?;
    if cfg.write_paths {
        out.write("local_times.csv", &relabel_header(ensemble_to_csv(&lt), "member,time", names()))?;
    }
    out.write_json(
        "summary.json",
        &LocalTimeSummary {
            n_paths: lt.len(),
            boundaries: n - 1,
            mean_terminal: (0..n - 1).map(|i| mean(&lt.terminal(i))).collect(),
            mean_max_terminal: mean(&maxima),
        },
    )?;
    Ok(RunSummary::seeded(cfg.seed))
}

pub fn read_domain(path: &Path) -> Result<PolyhedralDomain, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn certify(cfg: &CertifyConfig, out: &mut Outputs) -> Result<RunSummary, CliError> {
    let domain = match (&cfg.domain, cfg.n) {
        (Some(d), _) => d.clone(),
        (None, Some(n)) => PolyhedralDomain::chamber(n)?,
        (None, None) => return Err(CliError::Config("certify needs --n or a domain".into())),
    };
    let mats = build_matrices(&domain)?;
    let rho = spectral_radius(&mats.q, DEFAULT_SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::Certification(format!("spectral radius of Q is {rho} >= 1")).into());
    }
    let cert = match (&cfg.u, cfg.delta) {
        (Some(u), Some(delta)) => certificate_with_u(&domain, u, delta)?,
        (Some(_), None) | (None, Some(_)) => return Err(CliError::Config("u and delta must be given together".into())),
        (None, None) if domain.is_chamber() => certificate(&domain)?,
        (None, None) => {
            let (u, delta) = neumann_u_vector(&mats.q)?;
            certificate_with_u(&domain, &u, delta)?
        }
    };
    out.write_json("certificate.json", &cert)?;
    if domain.is_chamber() && domain.dim() >= 2 {
        out.write_json("spacing.json", &spacing_min_singular(domain.dim())?)?;
    }
    Ok(RunSummary {
        master_seed: None,
        derived_seeds: Vec::new(),
        ok: true,
    })
}

/// Independent sub-seed for the `k`-th ensemble of a run.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    master.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Serialize)]
struct TransportReport {
    metric: String,
    p: u32,
    n_paths: usize,
    w_hat: f64,
    bound: f64,
    slack: f64,
    allowance: f64,
    holds: bool,
    /// Transportation-cost constant used in the bound.
    c: f64,
    entropy: f64,
    constants: conc_lab::transport::QtciConstants,
    orlicz_reference: conc_lab::transport::OrliczResult,
    orlicz_target: conc_lab::transport::OrliczResult,
}

pub fn transport(cfg: &TransportConfig, out: &mut Outputs) -> Result<RunSummary, CliError> {
    let n = cfg.target.dim();
    let x0 = cfg.target.x0();
    check_dim(&x0, n)?;
    let horizon = cfg.grid.horizon();
    let entropy = match &cfg.target {
        ModelConfig::Rank { deltas, .. } => rank_model_entropy(deltas, horizon),
        ModelConfig::Brownian { drift, sigma, .. } => {
            if sigma.as_ref().is_some_and(|s| s.iter().any(|&v| v != 1.0)) {
                return Err(CliError::Config("a Brownian target must have unit diffusion to be absolutely continuous".into()));
            }
            0.5 * horizon * drift.iter().map(|m| m * m).sum::<f64>()
        }
    };
    let seeds = [derive_seed(cfg.seed, 1), derive_seed(cfg.seed, 2), derive_seed(cfg.seed, 3)];
    let reference = ModelConfig::Brownian {
        drift: vec![0.0; n],
        sigma: None,
        x0: Some(x0.clone()),
    };
    let p_ens = simulate_model(&reference, &SimConfig::new(cfg.grid, cfg.n_paths, seeds[0])?)?.0;
    let q_ens = simulate_model(&cfg.target, &SimConfig::new(cfg.grid, cfg.n_paths, seeds[1])?)?.0;
    let baseline = simulate_model(&reference, &SimConfig::new(cfg.grid, cfg.n_paths, seeds[2])?)?.0;

    let k = cfg.constants;
    let consts = qtci_constants(k.k1, k.k2, k.k, k.kappa, horizon, n)?;
    let report = qtci_verify(&p_ens, &q_ens, consts.c_nd, entropy, cfg.p, &cfg.metric, Some(&baseline))?;
    let (_, plan) = wasserstein_exact(&p_ens, &q_ens, cfg.p, &cfg.metric)?;

    let increments = |e: &Ensemble| -> Vec<f64> { e.terminal(0).iter().map(|v| v - x0[0]).collect() };
    let orlicz_reference = orlicz_norm(&increments(&p_ens), cfg.orlicz_tol)?;
    let orlicz_target = orlicz_norm(&increments(&q_ens), cfg.orlicz_tol)?;

    let mut coupling = String::from("reference_member,target_member,cost\n");
    for (i, &j) in plan.assignment.iter().enumerate() {
        let d = cfg.metric.eval(p_ens.member(i), q_ens.member(j))?;
        let _ = writeln!(coupling, "{i},{j},{}", d.powi(cfg.p as i32));
    }
    out.write("coupling.csv", &coupling)?;
    if cfg.write_cost_matrix {
        let cm = cost_matrix(&p_ens, &q_ens, cfg.p, &cfg.metric)?;
        let mut s = String::new();
        for row in cm.chunks(cfg.n_paths) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        out.write("cost_matrix.csv", &s)?;
    }
    out.write_json(
        "transport_report.json",
        &TransportReport {
            metric: cfg.metric.name().to_string(),
            p: cfg.p,
            n_paths: cfg.n_paths,
            w_hat: report.w_hat,
            bound: report.bound,
            slack: report.slack,
            allowance: report.allowance,
            holds: report.holds,
            c: consts.c_nd,
            entropy,
            constants: consts,
            orlicz_reference,
            orlicz_target,
        },
    )?;
    Ok(RunSummary {
        master_seed: Some(cfg.seed),
        derived_seeds: ["reference", "target", "reference_baseline"]
            .iter()
            .zip(seeds)
            .map(|(r, s)| DerivedSeed {
                role: r.to_string(),
                seed: s,
            })
            .collect(),
        ok: true,
    })
}

pub fn concentrate(cfg: &ConcentrateConfig, out: &mut Outputs) -> Result<RunSummary, CliError> {
    let r_grid = match (&cfg.r_grid, cfg.mode) {
        // sup |W| is O(1), so its informative radii start near zero.
        (None, ConcentrateMode::Martingale) => (1..=24).map(|i| 0.25 * i as f64).collect(),
        _ => cfg.r_grid(),
    };
    let sim = SimConfig::new(cfg.grid, cfg.n_paths, cfg.seed)?;
    match cfg.mode {
        ConcentrateMode::MaxLocalTime => {
            let deltas = cfg.deltas.clone().unwrap_or_else(|| vec![0.0; cfg.n]);
            if deltas.len() != cfg.n {
                return Err(CliError::Config(format!("deltas has length {}, n = {}", deltas.len(), cfg.n)));
            }
            let settings = Thm1Settings {
                deltas,
                r_grid: r_grid.clone(),
                scale_exponent: cfg.scale_exponent,
                method: cfg.method,
            };
            let (rep, chi) = thm1_experiment(cfg.n, &settings, &sim)?;
            let unscaled = chi_tail_report(&chi, cfg.n, cfg.grid.horizon(), &r_grid, 0.0)?;
            let mut chi_csv = String::from("member,chi\n");
            for (j, c) in chi.iter().enumerate() {
                let _ = writeln!(chi_csv, "{j},{c}");
            }
            out.write("chi.csv", &chi_csv)?;
            out.write("tail_report.csv", &tail_report_to_csv(&rep))?;
            out.write_json("tail_report.json", &rep)?;
            out.write("tail_report_unscaled.csv", &tail_report_to_csv(&unscaled))?;
            out.write_json("tail_report_unscaled.json", &unscaled)?;
        }
        ConcentrateMode::Martingale => {
            let wiener = SdeSystem::brownian_with_drift(&vec![0.0; cfg.n], &vec![0.0; cfg.n])?;
            let ens = euler_maruyama(&wiener, &sim)?;
            let family = LipschitzFamily::coordinate(0, cfg.n)?;
            let rep = martingale_concentration_check(&family, &ens, 1.0, &r_grid)?;
            out.write("tail_report.csv", &tail_report_to_csv(&rep))?;
            out.write_json("tail_report.json", &rep)?;
        }
    }
    Ok(RunSummary::seeded(cfg.seed))
}
