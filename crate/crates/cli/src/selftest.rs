//! Fast analytic checks runnable from a clean checkout.

use std::f64::consts::PI;

use conc_lab::concentration::{base_threshold, bound_preq};
use conc_lab::geometry::{build_matrices, certificate, chamber_q, spectral_radius, DEFAULT_SPECTRAL_TOL};
use conc_lab::path::{make_grid, Ensemble, MultiPath, Path, PathMetric};
use conc_lab::rng::{fill_normals, member_rng};
use conc_lab::sde::{simulate_rank_model, simulate_rank_path, RankModelSpec, SimConfig};
use conc_lab::skorokhod::{audit_solution, chamber_driving_path, skorokhod_map_1d, solve_sp, PolyhedralDomain};
use conc_lab::transport::{h_function, orlicz_norm, wasserstein_exact};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, f: impl FnOnce() -> conc_lab::Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_ensemble(m: usize, dim: usize, seed: u64) -> conc_lab::Result<Ensemble> {
    let g = make_grid(1.0, 0.1)?;
    let members = (0..m)
        .map(|j| {
            let mut rng = member_rng(seed, j as u64);
            let comps = (0..dim)
                .map(|_| {
                    let mut v = vec![0.0; g.len()];
                    fill_normals(&mut rng, &mut v);
                    v
                })
                .collect();
            MultiPath::new(g, comps)
        })
        .collect::<conc_lab::Result<Vec<_>>>()?;
    Ensemble::unseeded(members)
}

pub fn run() -> SelftestReport {
    let checks = vec![
        check("chamber_certificate_n4", || {
            let c = certificate(&PolyhedralDomain::chamber(4)?)?;
            let pass = c.delta == 0.0625 && c.k <= 1.0 + 4.0 * 4f64.powf(2.5) && c.diam_b <= 8.0;
            Ok((pass, format!("delta = {}, diam_B = {}, K = {}", c.delta, c.diam_b, c.k)))
        }),
        check("chamber_spectral_radius", || {
            let mut worst = 0.0_f64;
            for n in 2..=12 {
                let rho = spectral_radius(&chamber_q(n), DEFAULT_SPECTRAL_TOL)?;
                worst = worst.max((rho - (PI / n as f64).cos()).abs());
            }
            Ok((worst < 1e-10, format!("max |rho - cos(pi/n)| = {worst:e} over n = 2..12")))
        }),
        check("chamber_q_matches_geometry", || {
            let q = build_matrices(&PolyhedralDomain::chamber(5)?)?.q;
            let err = (q - chamber_q(5)).abs().max();
            Ok((err < 1e-14, format!("max entry difference {err:e}")))
        }),
        check("reflection_of_linear_descent", || {
            let g = make_grid(1.0, 0.01)?;
            let sol = skorokhod_map_1d(&Path::from_fn(g, |t| -t))?;
            let err = sol.face_local_times[0]
                .values()
                .iter()
                .zip(g.points())
                .map(|(l, t)| (l - t).abs())
                .fold(0.0, f64::max);
            let phi = sol.phi.component(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Ok((err < 1e-15 && phi < 1e-15, format!("max |l - t| = {err:e}, max |phi| = {phi:e}")))
        }),
        check("chamber_solution_audit", || {
            let g = make_grid(1.0, 1e-3)?;
            let spec = RankModelSpec::new(vec![0.0; 3], vec![0.0; 3])?;
            let domain = PolyhedralDomain::chamber(3)?;
            let path = simulate_rank_path(&spec, &g, 7, 0);
            let psi = chamber_driving_path(&path, 7, 0);
            let sol = solve_sp(&domain, &psi, 1e-11, 10_000)?;
            let audit = audit_solution(&domain, &psi, &sol, 2e-11);
            Ok((audit.passes(2e-11), format!("{audit:?}")))
        }),
        check("wasserstein_matches_permutations", || {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let metric = PathMetric::AveragedUniform;
            let mut mismatches = 0;
            for s in 0..10 {
                let a = random_ensemble(3, 2, 100 + s)?;
                let b = random_ensemble(3, 2, 200 + s)?;
                let (w, _) = wasserstein_exact(&a, &b, 2, &metric)?;
                let mut best = f64::INFINITY;
                for p in &perms {
                    let mut c = 0.0;
                    for (i, &j) in p.iter().enumerate() {
                        c += metric.eval(a.member(i), b.member(j))?.powi(2);
                    }
                    best = best.min(c);
                }
                if w != (best / 3.0).sqrt() {
                    mismatches += 1;
                }
            }
            Ok((mismatches == 0, format!("{mismatches} of 10 instances differ from enumeration")))
        }),
        check("orlicz_of_constant", || {
            // Solve e^x - x - 1 = 1 by Newton; the norm of the constant 1 is 1/x.
            let mut x = 1.0_f64;
            for _ in 0..50 {
                x -= (x.exp() - x - 2.0) / (x.exp() - 1.0);
            }
            let got = orlicz_norm(&[1.0; 8], 1e-13)?.norm_phi;
            let err = (got - 1.0 / x).abs();
            Ok((err < 1e-9, format!("norm {got}, expected {}", 1.0 / x)))
        }),
        check("constant_shift_metrics", || {
            let a = random_ensemble(1, 3, 5)?.member(0).clone();
            let b = a.map(|v| v + 0.75);
            let au = PathMetric::AveragedUniform.eval(&a, &b)?;
            let ue = PathMetric::UniformEuclidean.eval(&a, &b)?;
            let pass = (au - 0.75).abs() < 1e-12 && (ue - 0.75).abs() < 1e-12;
            Ok((pass, format!("averaged uniform {au}, uniform euclidean {ue}")))
        }),
        check("tail_bound_at_threshold", || {
            let b = bound_preq(1.0, base_threshold())?;
            Ok(((b.value - 1.0).abs() < 1e-12 && b.valid, format!("bound {} valid {}", b.value, b.valid)))
        }),
        check("h_negative_below_root", || {
            let v = h_function(1.0 / std::f64::consts::LN_2)?;
            Ok((v < 0.0 && (v + 0.4139).abs() < 1e-3, format!("h(1/log 2) = {v}")))
        }),
        check("seeded_streams_are_reproducible", || {
            let g = make_grid(0.5, 1e-2)?;
            let spec = RankModelSpec::new(vec![1.0, 0.0, -1.0], vec![0.0; 3])?;
            let cfg = SimConfig::new(g, 16, 99)?;
            let a = simulate_rank_model(&spec, &cfg)?.raw();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| conc_lab::Error::InvalidInput(e.to_string()))?;
            let b = pool.install(|| simulate_rank_model(&spec, &cfg))?.raw();
            Ok((a == b, "parallel and single-thread ensembles compared".into()))
        }),
    ];
    let passed = checks.iter().filter(|c| c.pass).count();
    SelftestReport {
        passed,
        failed: checks.len() - passed,
        checks,
    }
}
