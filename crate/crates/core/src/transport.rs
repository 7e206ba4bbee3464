//! Empirical Wasserstein distances by exact assignment, Girsanov entropy,
//! Birnbaum-Orlicz norms and transportation-cost constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::path::{Ensemble, PathMetric};

/// Largest ensemble size accepted by [`wasserstein_exact`].
pub const MAX_ASSIGNMENT_SIZE: usize = 2048;

/// Optimal pairing of two equal-size ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    /// `assignment[i]` is the member of the second ensemble paired with member `i`.
    pub assignment: Vec<usize>,
    /// `(mean paired metric^p)^{1/p}`.
    pub cost: f64,
}

/// Minimum-cost perfect matching on a dense row-major `m x m` cost matrix by
/// shortest augmenting paths with dual potentials. Returns the column of each
/// row.
pub fn solve_assignment(cost: &[f64], m: usize) -> Result<Vec<usize>> {
    if cost.len() != m * m {
        return Err(mismatch(format!("cost matrix has {} entries, expected {}", cost.len(), m * m)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix has non-finite entries"));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0_f64; m + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0_f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * m..i0 * m];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; m];
    for j in 1..=m {
        assignment[row_of[j] - 1] = j - 1;
    }
    Ok(assignment)
}

fn check_p(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(invalid(format!("p must be 1 or 2, got {p}")))
    }
}

/// Pairwise `metric(a_i, b_j)^p`, row-major.
pub fn cost_matrix(a: &Ensemble, b: &Ensemble, p: u32, metric: &PathMetric) -> Result<Vec<f64>> {
    check_p(p)?;
    if a.grid() != b.grid() || a.dim() != b.dim() {
        return Err(mismatch("ensembles differ in grid or dimension"));
    }
    let m = b.len();
    let rows = a
        .members()
        .par_iter()
        .map(|x| {
            b.members()
                .iter()
                .map(|y| metric.eval(x, y).map(|d| d.powi(p as i32)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(a.len() * m);
    for r in rows {
        out.extend(r);
    }
    Ok(out)
}

/// Exact empirical `W_p` between two equal-weight ensembles.
pub fn wasserstein_exact(a: &Ensemble, b: &Ensemble, p: u32, metric: &PathMetric) -> Result<(f64, CouplingPlan)> {
    check_p(p)?;
    let m = a.len();
    if m != b.len() {
        return Err(mismatch(format!("ensembles have {} and {} members", m, b.len())));
    }
    if m > MAX_ASSIGNMENT_SIZE {
        return Err(invalid(format!("{m} members exceed the exact solver budget of {MAX_ASSIGNMENT_SIZE}")));
    }
    let cost = cost_matrix(a, b, p, metric)?;
    let assignment = solve_assignment(&cost, m)?;
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    let w = (total / m as f64).powf(1.0 / p as f64);
    Ok((w, CouplingPlan { assignment, cost: w }))
}

/// `H = (1/2) mean_j sum_i int_0^T xi_i(u)^2 du` with left-point quadrature.
pub fn entropy_girsanov(xi: &Ensemble) -> f64 {
    let grid = *xi.grid();
    let per_member: Vec<f64> = xi
        .members()
        .iter()
        .map(|m| {
            m.components()
                .iter()
                .map(|c| (0..grid.steps()).map(|k| c[k] * c[k] * grid.step_len(k)).sum::<f64>())
                .sum()
        })
        .collect();
    0.5 * per_member.iter().sum::<f64>() / per_member.len() as f64
}

/// Closed-form entropy of the rank model with drifts `deltas` against the
/// driftless Wiener law on `[0, T]`.
pub fn rank_model_entropy(deltas: &[f64], horizon: f64) -> f64 {
    0.5 * horizon * deltas.iter().map(|d| d * d).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrliczResult {
    /// `inf { a > 0 : E Phi(|L|/a) <= 1 }`, `Phi(t) = e^t - t - 1`.
    pub norm_phi: f64,
    /// `E |L|`.
    pub norm_1: f64,
    /// `|E Phi(|L|/a) - 1|` at the returned `a`.
    pub residual: f64,
}

fn young(t: f64) -> f64 {
    t.exp_m1() - t
}

/// Sample mean of `Phi(|x|/a)`, accumulated as a running mean so that large
/// terms near the lower bracket do not overflow the sum.
pub fn mean_young(samples: &[f64], a: f64) -> f64 {
    let mut m = 0.0;
    for (k, x) in samples.iter().enumerate() {
        m += (young(x.abs() / a) - m) / (k + 1) as f64;
    }
    m
}

/// Birnbaum-Orlicz norm by bisection on the decreasing map
/// `a -> mean Phi(|L|/a)`, bracketed below by `max|L|/700`.
pub fn orlicz_norm(samples: &[f64], tol: f64) -> Result<OrliczResult> {
    if samples.is_empty() {
        return Err(invalid("Orlicz norm of an empty sample"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let max = samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let norm_1 = samples.iter().map(|x| x.abs()).sum::<f64>() / samples.len() as f64;
    if max == 0.0 {
        return Ok(OrliczResult {
            norm_phi: 0.0,
            norm_1,
            residual: 0.0,
        });
    }
    let g = |a: f64| mean_young(samples, a) - 1.0;
    let mut lo = max / 700.0;
    let mut hi = 2.0 * lo;
    while g(hi) >= 0.0 {
        hi *= 2.0;
    }
    let mut a = 0.5 * (lo + hi);
    let mut ga = g(a);
    for _ in 0..200 {
        if ga.abs() <= tol {
            break;
        }
        if ga > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let next = 0.5 * (lo + hi);
        if next == a {
            break;
        }
        a = next;
        ga = g(a);
    }
    if ga.abs() > tol {
        return Err(Error::NonConvergence {
            iterations: 200,
            residual: ga.abs(),
            history: vec![ga],
        });
    }
    Ok(OrliczResult {
        norm_phi: a,
        norm_1,
        residual: ga.abs(),
    })
}

/// Transportation-cost constants for the one-dimensional, multidimensional
/// and stopped settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QtciConstants {
    pub c_1d: f64,
    pub c_nd: f64,
    pub c_stopped: f64,
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub n: usize,
}

/// `C_1d = 4 kappa^2 T exp(4T (K1^2 T + 4 K2^2))`,
/// `C_nd = 4 kappa^2 T exp(K^2 T (T + 4)) / n`, and the stopped constant
/// `4 kappa^2` that the default locally-uniform weights give.
pub fn qtci_constants(k1: f64, k2: f64, k: f64, kappa: f64, horizon: f64, n: usize) -> Result<QtciConstants> {
    if !(kappa > 0.0) || !(horizon > 0.0) {
        return Err(invalid("kappa and T must be positive"));
    }
    if !(k1 >= 0.0 && k2 >= 0.0 && k >= 0.0) {
        return Err(invalid("Lipschitz constants must be nonnegative"));
    }
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let kap2 = kappa * kappa;
    Ok(QtciConstants {
        c_1d: 4.0 * kap2 * horizon * (4.0 * horizon * (k1 * k1 * horizon + 4.0 * k2 * k2)).exp(),
        c_nd: 4.0 * kap2 * horizon * (k * k * horizon * (horizon + 4.0)).exp() / n as f64,
        c_stopped: 4.0 * kap2,
        k1,
        k2,
        k,
        kappa,
        horizon,
        n,
    })
}

/// Stopped-process constant `4 kappa^2 max_{k <= blocks} c_k^2 k exp(4 K^2 (k + 4))`
/// for arbitrary block weights.
pub fn stopped_constant(kappa: f64, lipschitz: f64, weights: &[f64]) -> f64 {
    let m = weights
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = (i + 1) as f64;
            c * c * k * (4.0 * lipschitz * lipschitz * (k + 4.0)).exp()
        })
        .fold(0.0_f64, f64::max);
    4.0 * kappa * kappa * m
}

/// Empirical check of `W_p(P, Q) <= sqrt(2 C H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QtciReport {
    pub w_hat: f64,
    pub bound: f64,
    /// `bound - w_hat`.
    pub slack: f64,
    /// Same-law baseline: empirical `W_p` between two independent draws of P.
    pub allowance: f64,
    /// `slack >= -allowance`.
    pub holds: bool,
    pub p: u32,
}

/// Compares `W_p(P_ens, Q_ens)` with `sqrt(2 C H)`. When `p_baseline` (an
/// independent ensemble drawn from P) is given, the empirical distance between
/// it and `P_ens` is the finite-sample allowance; otherwise the allowance is 0.
pub fn qtci_verify(
    p_ens: &Ensemble,
    q_ens: &Ensemble,
    c: f64,
    h: f64,
    p: u32,
    metric: &PathMetric,
    p_baseline: Option<&Ensemble>,
) -> Result<QtciReport> {
    if !(c >= 0.0 && h >= 0.0) {
        return Err(invalid("C and H must be nonnegative"));
    }
    let (w_hat, _) = wasserstein_exact(p_ens, q_ens, p, metric)?;
    let allowance = match p_baseline {
        Some(b) => wasserstein_exact(p_ens, b, p, metric)?.0,
        None => 0.0,
    };
    let bound = (2.0 * c * h).sqrt();
    let slack = bound - w_hat;
    Ok(QtciReport {
        w_hat,
        bound,
        slack,
        allowance,
        holds: slack >= -allowance,
        p,
    })
}

/// `h(x) = x log x - x + exp(-1/x)` for `x > 0`.
pub fn h_function(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid(format!("h is defined for finite x > 0, got {x}")));
    }
    Ok(x * x.ln() - x + (-1.0 / x).exp())
}
