use conc_lab::geometry::{build_matrices, spectral_radius, DEFAULT_SPECTRAL_TOL};
use conc_lab::path::{make_grid, MultiPath, Path, TimeGrid};
use conc_lab::rng::{fill_normals, member_rng};
use conc_lab::sde::{simulate_rank_model, RankModelSpec, SimConfig};
use conc_lab::skorokhod::{
    audit_solution, rank_local_times, skorokhod_map_1d, solve_sp, tanaka_reconstruct, LocalTimeMethod,
    PolyhedralDomain,
};
use conc_lab::stats::{ks_distance, normal_cdf};
use proptest::prelude::*;
use rayon::prelude::*;

fn brownian(grid: TimeGrid, start: f64, seed: u64, member: u64) -> Vec<f64> {
    let mut rng = member_rng(seed, member);
    let mut z = vec![0.0; grid.steps()];
    fill_normals(&mut rng, &mut z);
    let mut v = Vec::with_capacity(grid.len());
    v.push(start);
    for (k, zk) in z.iter().enumerate() {
        v.push(v[k] + grid.step_len(k).sqrt() * zk);
    }
    v
}

fn half_normal_cdf(x: f64) -> f64 {
    (2.0 * normal_cdf(x) - 1.0).max(0.0)
}

fn ks_with_atom_at_zero(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        let upper = if i + 1 < v.len() && v[i + 1] == x { continue } else { (i + 1) as f64 / n };
        let first = v.partition_point(|&y| y < x) as f64 / n;
        let left = if x <= 0.0 { 0.0 } else { cdf(x) };
        d = d.max((upper - cdf(x)).abs()).max((left - first).abs());
    }
    d
}

#[test]
fn levy_identity_for_terminal_local_time() {
    let g = make_grid(1.0, 1e-3).unwrap();
    let l1: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|j| {
            let sol = skorokhod_map_1d(&Path::new(g, brownian(g, 0.0, 31, j)).unwrap()).unwrap();
            sol.face_local_times[0].last()
        })
        .collect();
    let raw = ks_distance(&l1, half_normal_cdf);
    assert!(raw < 0.03, "KS = {raw}");
    // Grid monitoring misses the excursion below the last grid minimum: the
    // deficit is -zeta(1/2)/sqrt(2 pi) sqrt(dt) on average, and paths that
    // never go negative on the grid form an atom at zero. The shifted law
    // puts its own atom h(shift) at zero, so its left limit there is 0.
    let shift = 0.582_597_157_939_010_6 * 1e-3_f64.sqrt();
    let corrected = ks_with_atom_at_zero(&l1, |x| half_normal_cdf(x + shift));
    assert!(corrected < 0.02, "KS against shifted law = {corrected}");
    eprintln!("Levy identity: KS raw {raw:.5}, monitoring-corrected {corrected:.5}");
}

proptest! {
    #[test]
    fn map_1d_is_one_lipschitz(
        a in prop::collection::vec(-3.0..3.0f64, 40),
        b in prop::collection::vec(-3.0..3.0f64, 40),
    ) {
        let g = make_grid(1.0, 1.0 / 39.0).unwrap();
        prop_assume!(g.len() == 40);
        let mut a = a;
        let mut b = b;
        a[0] = a[0].abs();
        b[0] = b[0].abs();
        let la = skorokhod_map_1d(&Path::new(g, a.clone()).unwrap()).unwrap();
        let lb = skorokhod_map_1d(&Path::new(g, b.clone()).unwrap()).unwrap();
        let dl = la.face_local_times[0].values().iter().zip(lb.face_local_times[0].values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let dpsi = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(dl <= dpsi + 1e-12);
    }
}

fn chamber_driver(n: usize, grid: TimeGrid, seed: u64, member: u64) -> MultiPath {
    // Start strictly inside {x_1 >= ... >= x_n, sum >= 0}, close enough to hit faces.
    let comps = (0..n)
        .map(|i| brownian(grid, 0.2 * (n - i) as f64, seed, member * n as u64 + i as u64))
        .collect();
    MultiPath::new(grid, comps).unwrap()
}

#[test]
fn three_particle_chamber_solutions_pass_audit() {
    let g = make_grid(1.0, 1e-3).unwrap();
    let domain = PolyhedralDomain::chamber(3).unwrap();
    let tol = 1e-11;
    for j in 0..20 {
        let psi = chamber_driver(3, g, 32, j);
        let sol = solve_sp(&domain, &psi, tol, 10_000).unwrap();
        let audit = audit_solution(&domain, &psi, &sol, 2.0 * tol);
        assert!(audit.passes(2.0 * tol), "member {j}: {audit:?}");
        assert!(sol.face_local_times.iter().any(|l| l.last() > 0.0));
    }
}

#[test]
fn sweep_residuals_contract_at_spectral_rate() {
    let g = make_grid(1.0, 1e-3).unwrap();
    for n in [3usize, 5, 8] {
        let domain = PolyhedralDomain::chamber(n).unwrap();
        let rho = spectral_radius(&build_matrices(&domain).unwrap().q, DEFAULT_SPECTRAL_TOL).unwrap();
        for j in 0..10 {
            let sol = solve_sp(&domain, &chamber_driver(n, g, 33, j), 1e-12, 10_000).unwrap();
            let r: Vec<f64> = sol.residuals.iter().copied().filter(|&v| v > 1e-10).collect();
            // Asymptotic regime: the second half of the informative sweeps.
            for w in r[r.len() / 2..].windows(2) {
                assert!(w[1] / w[0] <= rho + 0.05, "n={n} member {j}: ratio {} > {}", w[1] / w[0], rho + 0.05);
            }
        }
    }
}

#[test]
fn tanaka_reconstructs_absolute_value() {
    let g = make_grid(1.0, 1e-4).unwrap();
    let m = 1000;
    let total: f64 = (0..m as u64)
        .into_par_iter()
        .map(|j| {
            let b = Path::new(g, brownian(g, 0.0, 34, j)).unwrap();
            let (int, l) = tanaka_reconstruct(&b).unwrap();
            b.values()
                .iter()
                .zip(int.values().iter().zip(l.values()))
                .map(|(x, (i, l))| (x.abs() - (i + l)).abs())
                .fold(0.0, f64::max)
        })
        .sum();
    let mean_sup = total / m as f64;
    assert!(mean_sup < 0.05, "mean sup defect {mean_sup}");
}

#[test]
fn single_particle_has_no_local_times() {
    let cfg = SimConfig::new(make_grid(1.0, 0.01).unwrap(), 5, 35).unwrap();
    let re = simulate_rank_model(&RankModelSpec::new(vec![0.3], vec![0.0]).unwrap(), &cfg).unwrap();
    let domain = PolyhedralDomain::chamber(1).unwrap();
    assert!(rank_local_times(&re, &domain, LocalTimeMethod::default()).unwrap().is_none());
}

#[test]
fn separated_particles_do_not_collide() {
    let cfg = SimConfig::new(make_grid(0.1, 1e-3).unwrap(), 100, 36).unwrap();
    let spec = RankModelSpec::new(vec![0.0; 4], vec![30.0, 20.0, 10.0, 0.0]).unwrap();
    let re = simulate_rank_model(&spec, &cfg).unwrap();
    let domain = PolyhedralDomain::chamber(4).unwrap();
    for method in [LocalTimeMethod::default(), LocalTimeMethod::Occupation { eps: 0.01 }] {
        let lt = rank_local_times(&re, &domain, method).unwrap().unwrap();
        assert_eq!(lt.dim(), 3);
        for m in lt.members() {
            assert!(m.components().iter().all(|c| c.iter().all(|&v| v.abs() < 1e-12)), "{method:?}");
        }
    }
}

#[test]
fn two_particle_local_time_law() {
    let cfg = SimConfig::new(make_grid(1.0, 2e-4).unwrap(), 10_000, 37).unwrap();
    let spec = RankModelSpec::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
    let re = simulate_rank_model(&spec, &cfg).unwrap();
    let lt = rank_local_times(&re, &PolyhedralDomain::chamber(2).unwrap(), LocalTimeMethod::default())
        .unwrap()
        .unwrap();
    // (X_(1) - X_(2))/sqrt 2 is a reflected standard Brownian motion, whose
    // local time at one is distributed as |N(0, 1)|.
    let ks = ks_distance(&lt.terminal(0), half_normal_cdf);
    assert!(ks < 0.03, "KS = {ks}");
}
