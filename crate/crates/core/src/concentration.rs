//! Tail estimation, concentration bounds, a small calculus of Lipschitz
//! path functionals, and the maximal-local-time tail experiment.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::path::{Ensemble, MultiPath, PathMetric, TimeGrid};
use crate::rng::{member_rng, standard_normal, StreamRng};
use crate::sde::{simulate_rank_path, RankModelSpec, SimConfig};
use crate::skorokhod::{member_local_times, LocalTimeMethod};
use crate::stats::{linear_fit, lower_median};

/// Relative slack allowed when a probe ratio is compared with a declared constant.
pub const PROBE_RTOL: f64 = 1e-9;
/// Number of random path pairs per Lipschitz probe.
pub const PROBE_PAIRS: usize = 500;

/// `2 sqrt(2 log 2)`, the smallest radius at which the unit-constant bound applies.
pub fn base_threshold() -> f64 {
    2.0 * (2.0 * LN_2).sqrt()
}

/// Empirical tail probabilities of `|X - center|` with an optional bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub statistic_name: String,
    /// Lower sample median, or the sample mean where the bound is centred there.
    pub median: f64,
    /// `"lower_median"` or `"mean"`.
    pub center: String,
    pub n_samples: usize,
    pub r_grid: Vec<f64>,
    /// Deviation actually counted at each `r` (`r` times the scale).
    pub thresholds: Vec<f64>,
    pub empirical_tail: Vec<f64>,
    pub bound: Vec<f64>,
    pub r_valid: f64,
    /// Smallest constant for which the bound dominates on the valid range;
    /// `None` when no grid point is valid.
    pub fitted_c: Option<f64>,
    /// Floor used for zero tails inside the fit.
    pub tail_floor: f64,
    /// Least-squares slope of `log(tail)` against `r^2` on the valid range.
    pub log_tail_slope: Option<f64>,
    pub log_tail_r_squared: Option<f64>,
    /// Valid grid points with a positive tail, i.e. the regression sample size.
    pub regression_points: usize,
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(invalid("r grid is empty"));
    }
    if r_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(invalid("r grid must be finite and nonnegative"));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("r grid must be strictly increasing"));
    }
    Ok(())
}

fn count_tails(samples: &[f64], center: f64, thresholds: &[f64]) -> Vec<f64> {
    let mut dev: Vec<f64> = samples.iter().map(|x| (x - center).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let m = dev.len() as f64;
    thresholds
        .iter()
        .map(|&t| {
            let below = dev.partition_point(|&d| d < t);
            (dev.len() - below) as f64 / m
        })
        .collect()
}

fn report(name: &str, samples: &[f64], center: f64, center_kind: &str, r_grid: &[f64], scale: f64) -> TailReport {
    let thresholds: Vec<f64> = r_grid.iter().map(|r| r * scale).collect();
    TailReport {
        statistic_name: name.to_string(),
        median: center,
        center: center_kind.to_string(),
        n_samples: samples.len(),
        r_grid: r_grid.to_vec(),
        empirical_tail: count_tails(samples, center, &thresholds),
        thresholds,
        bound: Vec::new(),
        r_valid: 0.0,
        fitted_c: None,
        tail_floor: 0.5 / samples.len() as f64,
        log_tail_slope: None,
        log_tail_r_squared: None,
        regression_points: 0,
    }
}

/// Lower median and `P(|X - median| >= r)` at each grid point.
pub fn median_and_tails(samples: &[f64], r_grid: &[f64]) -> Result<TailReport> {
    if samples.len() < 2 {
        return Err(invalid("tail estimation needs at least two samples"));
    }
    check_grid(r_grid)?;
    let med = lower_median(samples)?;
    Ok(report("samples", samples, med, "lower_median", r_grid, 1.0))
}

impl TailReport {
    /// Fills `fitted_c` with `max_{r >= r_valid} r^2 / (denom * log(2 / tail))`
    /// (zero tails clamped to `tail_floor`) and the log-tail regression.
    fn fit(&mut self, denom: f64) {
        let mut best: Option<f64> = None;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (r, tail) in self.r_grid.iter().zip(&self.empirical_tail) {
            if *r < self.r_valid {
                continue;
            }
            let t = tail.max(self.tail_floor);
            let c = r * r / (denom * (2.0 / t).ln());
            best = Some(best.map_or(c, |b: f64| b.max(c)));
            if *tail > 0.0 {
                xs.push(r * r);
                ys.push(tail.ln());
            }
        }
        self.fitted_c = best;
        self.regression_points = xs.len();
        if let Ok(f) = linear_fit(&xs, &ys) {
            self.log_tail_slope = Some(f.slope);
            self.log_tail_r_squared = if f.r_squared.is_nan() { None } else { Some(f.r_squared) };
        }
    }
}

/// Value of a bound and whether `r` lies in the range where it is proved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub valid: bool,
}

/// `2 exp(-r^2 / (8C))`, valid for `r >= 2 sqrt(2 C log 2)`.
pub fn bound_preq(c: f64, r: f64) -> Result<BoundValue> {
    if !(c > 0.0) || !(r >= 0.0) {
        return Err(invalid("need C > 0 and r >= 0"));
    }
    Ok(BoundValue {
        value: 2.0 * (-r * r / (8.0 * c)).exp(),
        valid: r >= 2.0 * (2.0 * c * LN_2).sqrt(),
    })
}

/// One-sided bound under a perturbed drift:
/// `exp(-r^2 / (8C(1 + 4 l_phi)))`, valid for `r >= 2 sqrt(2C log 2 + 4C l_1)`.
pub fn bound_perturbed(c: f64, l1: f64, lphi: f64, r: f64) -> Result<BoundValue> {
    if !(c > 0.0) || !(l1 >= 0.0) || !(lphi >= 0.0) || !(r >= 0.0) {
        return Err(invalid("need C > 0 and nonnegative l1, lphi, r"));
    }
    Ok(BoundValue {
        value: (-r * r / (8.0 * c * (1.0 + 4.0 * lphi))).exp(),
        valid: r >= 2.0 * (2.0 * c * LN_2 + 4.0 * c * l1).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureBound {
    /// `2 exp(-r^2 / (32 C)) + mu_tail`.
    pub raw: f64,
    /// `min(raw, 1)`.
    pub capped: f64,
}

/// Bound for a randomised starting point, `mu_tail` being the start law's
/// mass where the conditional median is more than `r/2` from `m`.
pub fn bound_randomized_start(c: f64, r: f64, mu_tail: f64) -> Result<MixtureBound> {
    if !(c > 0.0) || !(0.0..=1.0).contains(&mu_tail) {
        return Err(invalid("need C > 0 and mu_tail in [0, 1]"));
    }
    if r < base_threshold() {
        return Err(invalid(format!("r = {r} is below 2 sqrt(2 log 2)")));
    }
    let raw = 2.0 * (-r * r / (32.0 * c)).exp() + mu_tail;
    Ok(MixtureBound { raw, capped: raw.min(1.0) })
}

pub type PathFn = Arc<dyn Fn(&MultiPath) -> f64 + Send + Sync>;
pub type PathFamilyFn = Arc<dyn Fn(&MultiPath, usize) -> f64 + Send + Sync>;

/// A real functional on path space with a declared Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzFunctional {
    evaluator: PathFn,
    pub alpha: f64,
    pub metric: PathMetric,
}

/// Functionals indexed by grid position `k`, sharing one Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzFamily {
    evaluator: PathFamilyFn,
    pub alpha: f64,
    pub metric: PathMetric,
}

impl fmt::Debug for LipschitzFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFunctional")
            .field("alpha", &self.alpha)
            .field("metric", &self.metric)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for LipschitzFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFamily")
            .field("alpha", &self.alpha)
            .field("metric", &self.metric)
            .finish_non_exhaustive()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("Lipschitz constant must be finite and >= 0, got {alpha}")))
    }
}

impl LipschitzFunctional {
    pub fn new(evaluator: PathFn, alpha: f64, metric: PathMetric) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { evaluator, alpha, metric })
    }

    pub fn eval(&self, path: &MultiPath) -> f64 {
        (self.evaluator)(path)
    }
}

impl LipschitzFamily {
    pub fn new(evaluator: PathFamilyFn, alpha: f64, metric: PathMetric) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { evaluator, alpha, metric })
    }

    pub fn eval(&self, path: &MultiPath, k: usize) -> f64 {
        (self.evaluator)(path, k)
    }

    /// `omega -> omega_i(t_k)`: Lipschitz with constant `sqrt(n)` under the
    /// averaged uniform metric on `n` components.
    pub fn coordinate(i: usize, n: usize) -> Result<Self> {
        if i >= n {
            return Err(invalid(format!("coordinate {i} out of range for dimension {n}")));
        }
        Self::new(Arc::new(move |w, k| w.component(i)[k]), (n as f64).sqrt(), PathMetric::AveragedUniform)
    }

    /// `omega -> (1/n) sum_i omega_i(t_k)`, with constant 1 under the averaged
    /// uniform metric.
    pub fn coordinate_mean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension must be positive"));
        }
        lipschitz_family_from_coordinates(
            Arc::new(move |w, k| w.components().iter().map(|c| c[k]).sum::<f64>() / n as f64),
            1.0 / n as f64,
            n,
        )
    }

    /// The same functional at every time.
    pub fn constant_in_time(f: LipschitzFunctional) -> Self {
        let e = f.evaluator.clone();
        Self {
            evaluator: Arc::new(move |w, _| e(w)),
            alpha: f.alpha,
            metric: f.metric,
        }
    }

    /// The member at grid index `k`.
    pub fn at(&self, k: usize) -> LipschitzFunctional {
        let e = self.evaluator.clone();
        LipschitzFunctional {
            evaluator: Arc::new(move |w| e(w, k)),
            alpha: self.alpha,
            metric: self.metric.clone(),
        }
    }
}

/// `omega -> max_k f_k(omega)` over the path's grid; the constant is unchanged.
pub fn lipschitz_sup(family: &LipschitzFamily) -> LipschitzFunctional {
    let e = family.evaluator.clone();
    LipschitzFunctional {
        evaluator: Arc::new(move |w| (0..w.grid().len()).map(|k| e(w, k)).fold(f64::NEG_INFINITY, f64::max)),
        alpha: family.alpha,
        metric: family.metric.clone(),
    }
}

/// `phi o f` for a `phi_lip`-Lipschitz real map `phi`.
pub fn lipschitz_compose(
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    phi_lip: f64,
    f: &LipschitzFunctional,
) -> Result<LipschitzFunctional> {
    check_alpha(phi_lip)?;
    let e = f.evaluator.clone();
    LipschitzFunctional::new(Arc::new(move |w| phi(e(w))), phi_lip * f.alpha, f.metric.clone())
}

/// Pointwise composition along a family.
pub fn lipschitz_compose_family(
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    phi_lip: f64,
    f: &LipschitzFamily,
) -> Result<LipschitzFamily> {
    check_alpha(phi_lip)?;
    let e = f.evaluator.clone();
    LipschitzFamily::new(Arc::new(move |w, k| phi(e(w, k))), phi_lip * f.alpha, f.metric.clone())
}

/// `g_k = sum_{m < k} f_m dt_m` (left-point quadrature); the constant scales by `T`.
pub fn lipschitz_integrate(family: &LipschitzFamily, horizon: f64) -> Result<LipschitzFamily> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let e = family.evaluator.clone();
    LipschitzFamily::new(
        Arc::new(move |w, k| {
            let g = w.grid();
            (0..k).map(|m| e(w, m) * g.step_len(m)).sum()
        }),
        horizon * family.alpha,
        family.metric.clone(),
    )
}

/// A functional that is `c`-Lipschitz in each of `n` coordinates separately
/// (uniform norm) is `n c`-Lipschitz under the averaged uniform metric.
pub fn lipschitz_from_coordinates(f: PathFn, per_coordinate_alpha: f64, n: usize) -> Result<LipschitzFunctional> {
    check_alpha(per_coordinate_alpha)?;
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    LipschitzFunctional::new(f, n as f64 * per_coordinate_alpha, PathMetric::AveragedUniform)
}

pub fn lipschitz_family_from_coordinates(f: PathFamilyFn, per_coordinate_alpha: f64, n: usize) -> Result<LipschitzFamily> {
    check_alpha(per_coordinate_alpha)?;
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    LipschitzFamily::new(f, n as f64 * per_coordinate_alpha, PathMetric::AveragedUniform)
}

/// Smooth random path: per component, `a_0 + sum_{k=1}^{6} (a_k cos + b_k sin)(2 pi k t / T) / k`
/// with standard normal coefficients.
pub fn random_smooth_path(grid: &TimeGrid, dim: usize, rng: &mut StreamRng) -> MultiPath {
    const MODES: usize = 6;
    let horizon = grid.horizon();
    let pts = grid.points();
    let comps = (0..dim)
        .map(|_| {
            let a0 = standard_normal(rng);
            let coef: Vec<(f64, f64)> = (0..MODES).map(|_| (standard_normal(rng), standard_normal(rng))).collect();
            pts.iter()
                .map(|t| {
                    a0 + coef
                        .iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let w = 2.0 * PI * (k + 1) as f64 * t / horizon;
                            (a * w.cos() + b * w.sin()) / (k + 1) as f64
                        })
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    MultiPath::new(*grid, comps).expect("consistent shapes")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub alpha: f64,
    pub max_ratio: f64,
    pub pairs: usize,
    pub passed: bool,
}

fn probe_pairs(grid: &TimeGrid, dim: usize, pairs: usize, seed: u64) -> Vec<(MultiPath, MultiPath)> {
    (0..pairs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = member_rng(seed, j);
            let a = random_smooth_path(grid, dim, &mut rng);
            let mut b = random_smooth_path(grid, dim, &mut rng);
            // Every third pair is a small perturbation, where ratios of
            // nonlinear functionals approach their local slopes.
            if j % 3 == 2 {
                b = a.zip_with(&b, |x, y| x + 1e-3 * y).expect("same shape");
            }
            (a, b)
        })
        .collect()
}

fn finish_probe(alpha: f64, ratios: Vec<f64>) -> ProbeReport {
    let max_ratio = ratios.into_iter().fold(0.0_f64, f64::max);
    ProbeReport {
        alpha,
        max_ratio,
        pairs: PROBE_PAIRS,
        passed: max_ratio <= alpha * (1.0 + PROBE_RTOL) + f64::MIN_POSITIVE,
    }
}

/// Largest `|f(x) - f(y)| / d(x, y)` over random smooth pairs.
pub fn probe_functional(f: &LipschitzFunctional, grid: &TimeGrid, dim: usize, seed: u64) -> Result<ProbeReport> {
    let pairs = probe_pairs(grid, dim, PROBE_PAIRS, seed);
    let ratios = pairs
        .par_iter()
        .map(|(a, b)| {
            let d = f.metric.eval(a, b)?;
            Ok(if d > 0.0 { (f.eval(a) - f.eval(b)).abs() / d } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish_probe(f.alpha, ratios))
}

/// As [`probe_functional`], taking the worst grid index for each pair.
pub fn probe_family(f: &LipschitzFamily, grid: &TimeGrid, dim: usize, seed: u64) -> Result<ProbeReport> {
    let pairs = probe_pairs(grid, dim, PROBE_PAIRS, seed);
    let ratios = pairs
        .par_iter()
        .map(|(a, b)| {
            let d = f.metric.eval(a, b)?;
            if d == 0.0 {
                return Ok(0.0);
            }
            Ok((0..grid.len()).map(|k| (f.eval(a, k) - f.eval(b, k)).abs() / d).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish_probe(f.alpha, ratios))
}

/// Checks a per-coordinate constant by perturbing one coordinate at a time:
/// largest `|f(x) - f(x')| / sup |x_i - x'_i|` where `x'` differs from `x`
/// only in coordinate `i`.
pub fn probe_per_coordinate(f: &PathFn, per_coordinate_alpha: f64, grid: &TimeGrid, dim: usize, seed: u64) -> Result<ProbeReport> {
    let pairs = probe_pairs(grid, dim, PROBE_PAIRS, seed);
    let ratios = pairs
        .par_iter()
        .enumerate()
        .map(|(j, (a, b))| {
            let i = j % dim;
            let mut comps = a.components().to_vec();
            comps[i] = b.component(i).to_vec();
            let c = MultiPath::new(*grid, comps)?;
            let d = a.component(i).iter().zip(c.component(i)).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            Ok(if d > 0.0 { (f(a) - f(&c)).abs() / d } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish_probe(per_coordinate_alpha, ratios))
}

/// `chi = max_j L_{j,j+1}(T)` for each path's vector of terminal local times.
pub fn chi_statistic(local_times: &[Vec<f64>]) -> Result<Vec<f64>> {
    local_times
        .iter()
        .map(|v| {
            if v.is_empty() {
                Err(invalid("a path has no local times"))
            } else {
                Ok(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            }
        })
        .collect()
}

/// Terminal boundary local times of each member of the rank model, simulated
/// and reduced member by member so the full ensemble is never held in memory.
pub fn terminal_local_times(spec: &RankModelSpec, config: &SimConfig, method: LocalTimeMethod) -> Result<Vec<Vec<f64>>> {
    if spec.n() < 2 {
        return Err(invalid("local times need at least two particles"));
    }
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let path = simulate_rank_path(spec, &config.grid, config.master_seed, j);
            let lts = member_local_times(&path, method, config.master_seed, j)?;
            Ok(lts.iter().map(|l| l.last()).collect())
        })
        .collect()
}

/// Settings of the maximal-local-time experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Settings {
    pub deltas: Vec<f64>,
    /// Radii `r`; deviations are counted at `r n^scale_exponent`.
    pub r_grid: Vec<f64>,
    pub scale_exponent: f64,
    pub method: LocalTimeMethod,
}

impl Thm1Settings {
    pub fn new(n: usize, r_grid: Vec<f64>) -> Self {
        Self {
            deltas: vec![0.0; n],
            r_grid,
            scale_exponent: 2.5,
            method: LocalTimeMethod::default(),
        }
    }
}

/// Default radii: `count` evenly spaced points from `2 sqrt(2 log 2)` to `stop`.
pub fn default_r_grid(stop: f64, count: usize) -> Vec<f64> {
    let start = base_threshold();
    if count < 2 || stop <= start {
        return vec![start];
    }
    (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect()
}

/// Tail report of `chi` samples: deviations from the lower median counted at
/// `r n^exponent`; `fitted_c` is the smallest `C` with
/// `2 exp(-r^2 / (C T)) >= tail` on `r >= 2 sqrt(2 log 2)`.
pub fn chi_tail_report(chi: &[f64], n: usize, horizon: f64, r_grid: &[f64], scale_exponent: f64) -> Result<TailReport> {
    if chi.len() < 2 {
        return Err(invalid("tail estimation needs at least two samples"));
    }
    check_grid(r_grid)?;
    let med = lower_median(chi)?;
    let mut rep = report("chi", chi, med, "lower_median", r_grid, (n as f64).powf(scale_exponent));
    rep.r_valid = base_threshold();
    rep.fit(horizon);
    let c = rep.fitted_c;
    rep.bound = r_grid
        .iter()
        .map(|r| match c {
            Some(c) => 2.0 * (-r * r / (c * horizon)).exp(),
            None => f64::NAN,
        })
        .collect();
    Ok(rep)
}

/// Simulates the rank model, forms `chi` and reports its tails.
pub fn thm1_experiment(n: usize, settings: &Thm1Settings, config: &SimConfig) -> Result<(TailReport, Vec<f64>)> {
    if n < 2 || settings.deltas.len() != n {
        return Err(invalid("experiment needs n >= 2 and one drift per rank"));
    }
    if settings.r_grid.first().is_some_and(|&r| r < base_threshold() - 1e-12) {
        return Err(invalid("r grid must start at or above 2 sqrt(2 log 2)"));
    }
    let spec = RankModelSpec::new(settings.deltas.clone(), vec![0.0; n])?;
    let lts = terminal_local_times(&spec, config, settings.method)?;
    let chi = chi_statistic(&lts)?;
    let rep = chi_tail_report(&chi, n, config.grid.horizon(), &settings.r_grid, settings.scale_exponent)?;
    Ok((rep, chi))
}

/// Tails of `sup_t |N(t)|` around its sample mean against
/// `2 exp(-r^2 / (8 C alpha^2))`, valid for `r >= 2 alpha sqrt(2 C log 2)`.
/// `fitted_c` is the smallest `C alpha^2` dominating the tails on that range.
pub fn martingale_concentration_check(n_family: &LipschitzFamily, ensemble: &Ensemble, c: f64, r_grid: &[f64]) -> Result<TailReport> {
    if !(c > 0.0) {
        return Err(invalid("C must be positive"));
    }
    if ensemble.len() < 2 {
        return Err(invalid("tail estimation needs at least two samples"));
    }
    check_grid(r_grid)?;
    let sup_abs = lipschitz_sup(&lipschitz_compose_family(Arc::new(f64::abs), 1.0, n_family)?);
    let samples: Vec<f64> = ensemble.members().par_iter().map(|m| sup_abs.eval(m)).collect();
    let nu = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut rep = report("sup_abs_martingale", &samples, nu, "mean", r_grid, 1.0);
    let a2 = n_family.alpha * n_family.alpha;
    rep.r_valid = 2.0 * (2.0 * c * a2 * LN_2).sqrt();
    rep.bound = r_grid.iter().map(|r| 2.0 * (-r * r / (8.0 * c * a2)).exp()).collect();
    rep.fit(8.0);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::make_grid;

    #[test]
    fn tails_by_counting() {
        let r = median_and_tails(&[1.0, 2.0, 3.0], &[0.5]).unwrap();
        assert_eq!(r.median, 2.0);
        assert!((r.empirical_tail[0] - 2.0 / 3.0).abs() < 1e-15);
        let r = median_and_tails(&[4.0; 5], &[0.1, 1.0]).unwrap();
        assert_eq!(r.empirical_tail, vec![0.0, 0.0]);
        assert!(median_and_tails(&[], &[1.0]).is_err());
        assert!(median_and_tails(&[1.0, 2.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = bound_preq(1.0, base_threshold()).unwrap();
        assert!((b.value - 1.0).abs() < 1e-15);
        assert!(b.valid);
        let b = bound_preq(1.0, 0.0).unwrap();
        assert_eq!((b.value, b.valid), (2.0, false));
        assert!((bound_preq(0.5, 4.0).unwrap().value - 2.0 * (-4.0_f64).exp()).abs() < 1e-16);

        let p = bound_perturbed(1.0, 0.0, 0.0, base_threshold()).unwrap();
        assert!((p.value - 0.5).abs() < 1e-15);
        assert!(p.valid);
        let thr = 2.0 * (2.0 * LN_2 + 4.0).sqrt();
        assert!((thr - 4.6417).abs() < 1e-4);
        assert!(bound_perturbed(1.0, 1.0, 1.0, thr).unwrap().valid);
        assert!(!bound_perturbed(1.0, 1.0, 1.0, thr - 1e-9).unwrap().valid);

        let m = bound_randomized_start(1.0, 4.0, 0.0).unwrap();
        assert!((m.raw - 2.0 * (-0.5_f64).exp()).abs() < 1e-15);
        assert_eq!(m.capped, 1.0);
        assert_eq!(bound_randomized_start(1.0, 4.0, 1.0).unwrap().capped, 1.0);
        assert!((bound_randomized_start(1.0, 8.0, 0.0).unwrap().raw - 2.0 * (-2.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sup_of_projection_is_running_max() {
        let g = make_grid(1.0, 0.1).unwrap();
        let f = lipschitz_sup(&LipschitzFamily::coordinate(0, 1).unwrap());
        assert_eq!(f.alpha, 1.0);
        let w = MultiPath::new(g, vec![g.points().iter().map(|t| (6.0 * t).sin()).collect()]).unwrap();
        let max = w.component(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f.eval(&w), max);
    }

    #[test]
    fn calculus_constants() {
        let fam = LipschitzFamily::coordinate_mean(3).unwrap();
        assert_eq!(fam.alpha, 1.0);
        let sup = lipschitz_sup(&fam);
        let c = lipschitz_compose(Arc::new(|x| 3.0 * x + 1.0), 3.0, &sup).unwrap();
        assert_eq!(c.alpha, 3.0);
        let i = lipschitz_integrate(&fam, 2.0).unwrap();
        assert_eq!(i.alpha, 2.0);
        let g = make_grid(2.0, 0.5).unwrap();
        let ones = MultiPath::new(g, vec![vec![1.0; g.len()]; 3]).unwrap();
        assert_eq!(i.eval(&ones, 4), 2.0);
        assert!(lipschitz_compose(Arc::new(|x| x), -1.0, &sup).is_err());
    }

    #[test]
    fn probes_accept_true_constants_and_reject_false_ones() {
        let g = make_grid(1.0, 0.01).unwrap();
        let fam = LipschitzFamily::coordinate_mean(3).unwrap();
        assert!(probe_family(&fam, &g, 3, 1).unwrap().passed);
        let sup = lipschitz_sup(&fam);
        assert!(probe_functional(&sup, &g, 3, 2).unwrap().passed);
        let mut lying = sup.clone();
        lying.alpha = 0.1;
        assert!(!probe_functional(&lying, &g, 3, 2).unwrap().passed);
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_statistic(&[vec![0.4]]).unwrap(), vec![0.4]);
        assert_eq!(chi_statistic(&[vec![0.0, 0.0]]).unwrap(), vec![0.0]);
        assert_eq!(chi_statistic(&[vec![0.1, 0.7, 0.3, 0.2]]).unwrap(), vec![0.7]);
        assert!(chi_statistic(&[vec![]]).is_err());
    }

    #[test]
    fn fitted_constant_dominates() {
        let chi: Vec<f64> = (0..1000).map(|i| (i as f64 / 100.0).powi(2)).collect();
        let grid = default_r_grid(6.0, 8);
        let rep = chi_tail_report(&chi, 1, 1.0, &grid, 0.0).unwrap();
        let c = rep.fitted_c.unwrap();
        assert!(c.is_finite());
        for (b, t) in rep.bound.iter().zip(&rep.empirical_tail) {
            assert!(b + 1e-12 >= *t);
        }
    }
}
