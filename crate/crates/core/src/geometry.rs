//! Reflection matrices of a polyhedral domain, spectral certification of the
//! Skorokhod map, and the explicit Lipschitz certificate for the chamber.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::skorokhod::{dot, PolyhedralDomain};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 200_000;
/// Largest face count for which the sign-pattern diameter is enumerated.
pub const EXACT_DIAMETER_MAX_FACES: usize = 20;

/// Direction matrix `D` (columns `d_i`), `Q` and the spacing matrix `S` of
/// the ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionMatrices {
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// `S` with columns `(e_j - e_{j+1})/sqrt(2)`, `j = 1..n-1`.
pub fn spacing_matrix(n: usize) -> DMatrix<f64> {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(n, n.saturating_sub(1), |i, j| {
        if i == j {
            c
        } else if i == j + 1 {
            -c
        } else {
            0.0
        }
    })
}

/// `q_ij = |<d_i, eta_j>|` off the diagonal and `|1 - <d_i, eta_i>|` on it.
/// Rejects domains whose directions are linearly dependent.
pub fn build_matrices(domain: &PolyhedralDomain) -> Result<ReflectionMatrices> {
    let faces = domain.faces();
    let m = faces.len();
    let d = DMatrix::from_fn(domain.dim(), m, |r, c| faces[c].direction[r]);
    let rank = d.clone().svd(false, false).rank(1e-10);
    if rank < m {
        return Err(invalid(format!("reflection directions have rank {rank} < {m}")));
    }
    let q = DMatrix::from_fn(m, m, |i, j| {
        let ip = dot(&faces[i].direction, &faces[j].normal);
        if i == j {
            (1.0 - ip).abs()
        } else {
            ip.abs()
        }
    });
    Ok(ReflectionMatrices {
        d,
        q,
        s: spacing_matrix(domain.dim()),
    })
}

fn is_symmetric(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    (0..n).all(|i| (0..i).all(|j| q[(i, j)] == q[(j, i)]))
}

/// Spectral radius of a nonnegative square matrix.
///
/// Indices whose row and column both vanish are dropped; on the rest, power
/// iteration runs on `Q + I` (the shift keeps bipartite blocks from
/// oscillating) from the all-ones vector. Stops when the Collatz-Wielandt
/// bracket `[min (Bx)_i/x_i, max (Bx)_i/x_i]` is narrower than `tol`, or, for
/// symmetric input, when the eigen-residual is below `tol`; the symmetric
/// case returns the Rayleigh quotient.
pub fn spectral_radius(q: &DMatrix<f64>, tol: f64) -> Result<f64> {
    spectral_radius_with(q, tol, DEFAULT_SPECTRAL_MAX_ITER)
}

pub fn spectral_radius_with(q: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    if !q.is_square() {
        return Err(invalid(format!("matrix is {}x{}, expected square", q.nrows(), q.ncols())));
    }
    if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("matrix must be finite and nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = q.nrows();
    let active: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| q[(i, j)] != 0.0 || q[(j, i)] != 0.0))
        .collect();
    let m = active.len();
    if m == 0 {
        return Ok(0.0);
    }
    let mut b = vec![0.0; m * m];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            b[r * m + c] = q[(i, j)] + if r == c { 1.0 } else { 0.0 };
        }
    }
    let symmetric = is_symmetric(q);
    let mut x = vec![1.0; m];
    let mut y = vec![0.0; m];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        for r in 0..m {
            y[r] = b[r * m..(r + 1) * m].iter().zip(&x).map(|(a, v)| a * v).sum();
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (yi, xi) in y.iter().zip(&x) {
            let ratio = yi / xi;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let width = hi - lo;
        history.push(width);
        if symmetric {
            let xx: f64 = x.iter().map(|v| v * v).sum();
            let lambda = dot(&x, &y) / xx;
            let res = y.iter().zip(&x).map(|(a, v)| (a - lambda * v).powi(2)).sum::<f64>().sqrt() / xx.sqrt();
            if width < tol || res < tol {
                return Ok(lambda - 1.0);
            }
        } else if width < tol {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        let scale = y.iter().cloned().fold(0.0_f64, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / scale;
        }
    }
    let tail = history.len().saturating_sub(10);
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history: history[tail..].to_vec(),
    })
}

/// `Q` of the `n`-dimensional chamber: `1/2` on the first off-diagonals of the
/// leading `(n-1)x(n-1)` block, zero elsewhere.
pub fn chamber_q(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i + 1 < n && j + 1 < n && i.abs_diff(j) == 1 {
            0.5
        } else {
            0.0
        }
    })
}

/// Positive `u` with `Qu < u` for the chamber and the slack `delta = n^{-2}`:
/// `u_k = (k/n)(1 - k/n)` for `k < n` and `u_n = n^{-2}`.
pub fn build_u_vector(n: usize) -> Result<(Vec<f64>, f64)> {
    if n < 2 {
        return Err(invalid("u-vector needs n >= 2"));
    }
    let nf = n as f64;
    let delta = 1.0 / (nf * nf);
    let mut u: Vec<f64> = (1..n).map(|k| (k as f64 / nf) * (1.0 - k as f64 / nf)).collect();
    u.push(delta);
    check_slack(&chamber_q(n), &u, delta)?;
    Ok((u, delta))
}

/// `u = (I - |Q|)^{-1} 1` for a general domain, with `delta = min(u - Qu)`.
/// Positive whenever the entrywise absolute value `|Q|` has spectral radius
/// below one, and then `Qu <= |Q|u = u - 1`.
pub fn neumann_u_vector(q: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let abs_q = q.abs();
    let rho = spectral_radius(&abs_q, DEFAULT_SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::Certification(format!("spectral radius of |Q| is {rho} >= 1, no default u-vector")));
    }
    let n = q.nrows();
    let u: Vec<f64> = (DMatrix::identity(n, n) - abs_q)
        .lu()
        .solve(&DMatrix::from_element(n, 1, 1.0))
        .ok_or_else(|| Error::Certification("I - |Q| is singular".into()))?
        .iter()
        .copied()
        .collect();
    let delta = slack_vector(q, &u).into_iter().fold(f64::INFINITY, f64::min);
    check_slack(q, &u, delta)?;
    Ok((u, delta))
}

/// Componentwise `u - Qu`.
pub fn slack_vector(q: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| u[i] - (0..u.len()).map(|j| q[(i, j)] * u[j]).sum::<f64>())
        .collect()
}

fn check_slack(q: &DMatrix<f64>, u: &[f64], delta: f64) -> Result<()> {
    if u.len() != q.nrows() {
        return Err(invalid(format!("u has length {}, Q is {}x{}", u.len(), q.nrows(), q.ncols())));
    }
    if u.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Certification("u must be positive".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Certification("delta must be positive".into()));
    }
    let slack = slack_vector(q, u);
    let min = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::Certification(format!("Qu < u fails: min(u - Qu) = {min}")));
    }
    // Relative allowance for rounding in the subtraction.
    if min < delta * (1.0 - 1e-12) {
        return Err(Error::Certification(format!("min(u - Qu) = {min} < delta = {delta}")));
    }
    Ok(())
}

/// Explicit Lipschitz constant `K = 1 + diam(B)/delta` of the Skorokhod map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "diam_B")]
    pub diam_b: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub spectral_radius: f64,
    pub u: Vec<f64>,
    /// Whether `diam_B` comes from exhaustive sign enumeration.
    pub diameter_exact: bool,
}

/// `2 max_sigma |sum_i sigma_i w_i|` over all sign patterns, walking the
/// patterns in Gray-code order with the first sign fixed (the norm is even).
pub fn max_signed_sum_norm(vectors: &[Vec<f64>]) -> f64 {
    let nf = vectors.len();
    if nf == 0 {
        return 0.0;
    }
    let free = nf - 1;
    let low = free.min(14);
    let high = free - low;
    let best = (0u64..1 << high)
        .into_par_iter()
        .map(|h| {
            let mut s = vectors[0].clone();
            for (j, v) in vectors.iter().enumerate().skip(1) {
                let sign = if j > low && (h >> (j - 1 - low)) & 1 == 1 { -1.0 } else { 1.0 };
                for (a, b) in s.iter_mut().zip(v) {
                    *a += sign * b;
                }
            }
            let mut signs = vec![1.0; low];
            let mut best = s.iter().map(|v| v * v).sum::<f64>();
            for g in 1u64..1 << low {
                let bit = g.trailing_zeros() as usize;
                let v = &vectors[1 + bit];
                let f = -2.0 * signs[bit];
                for (a, b) in s.iter_mut().zip(v) {
                    *a += f * b;
                }
                signs[bit] = -signs[bit];
                best = best.max(s.iter().map(|v| v * v).sum::<f64>());
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    2.0 * best.sqrt()
}

/// Certificate for the chamber with the built-in u-vector. Other domains need
/// [`certificate_with_u`].
pub fn certificate(domain: &PolyhedralDomain) -> Result<LipschitzCertificate> {
    if !domain.is_chamber() {
        return Err(invalid("automatic certificates cover the chamber only; supply u and delta"));
    }
    let n = domain.dim();
    let (u, delta) = build_u_vector(n)?;
    let cert = certificate_with_u(domain, &u, delta)?;
    let nf = n as f64;
    if cert.diam_b > 4.0 * nf.sqrt() * (1.0 + 1e-12) {
        return Err(Error::Certification(format!("diam_B = {} exceeds 4 sqrt(n)", cert.diam_b)));
    }
    if cert.k > (1.0 + 4.0 * nf.powf(2.5)) * (1.0 + 1e-12) {
        return Err(Error::Certification(format!("K = {} exceeds 1 + 4 n^(5/2)", cert.k)));
    }
    Ok(cert)
}

pub fn certificate_with_u(domain: &PolyhedralDomain, u: &[f64], delta: f64) -> Result<LipschitzCertificate> {
    let mats = build_matrices(domain)?;
    let rho = spectral_radius(&mats.q, DEFAULT_SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::Certification(format!("spectral radius {rho} >= 1, no certificate")));
    }
    check_slack(&mats.q, u, delta)?;
    let faces = domain.faces();
    let (diam_b, exact) = if faces.len() <= EXACT_DIAMETER_MAX_FACES {
        let scaled: Vec<Vec<f64>> = faces
            .iter()
            .zip(u)
            .map(|(f, ui)| f.direction.iter().map(|v| v * ui).collect())
            .collect();
        (max_signed_sum_norm(&scaled), true)
    } else if domain.is_chamber() {
        (2.0 * (3.0 * u.iter().map(|v| v * v).sum::<f64>()).sqrt(), false)
    } else {
        let tri: f64 = faces.iter().zip(u).map(|(f, ui)| ui * dot(&f.direction, &f.direction).sqrt()).sum();
        (2.0 * tri, false)
    };
    Ok(LipschitzCertificate {
        n: domain.dim(),
        delta,
        diam_b,
        k: 1.0 + diam_b / delta,
        spectral_radius: rho,
        u: u.to_vec(),
        diameter_exact: exact,
    })
}

/// Three candidate values for `inf_{|v|=1} |Sv|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub n: usize,
    /// `(v_1^2 + v_{n-1}^2)/2` at equal entries, i.e. `1/(n-1)`.
    pub equal_entries_bound: f64,
    /// Smallest eigenvalue of `S^T S` from a dense eigensolve.
    pub numeric: f64,
    /// `1 - cos(pi/n)`.
    pub closed_form: f64,
    /// Whether the equal-entries value differs from the numeric one by more
    /// than `1e-8`.
    pub disagreement: bool,
}

pub fn spacing_min_singular(n: usize) -> Result<SpacingReport> {
    if n < 2 {
        return Err(invalid("spacing matrix needs n >= 2"));
    }
    let s = spacing_matrix(n);
    let gram = s.transpose() * &s;
    let numeric = SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let equal_entries_bound = 1.0 / (n as f64 - 1.0);
    Ok(SpacingReport {
        n,
        equal_entries_bound,
        numeric,
        closed_form: 1.0 - (std::f64::consts::PI / n as f64).cos(),
        disagreement: (equal_entries_bound - numeric).abs() > 1e-8,
    })
}

/// Least-squares `L` in `S L = r` for `r` of length `n`: solves the
/// tridiagonal normal equations `S^T S L = S^T r`.
pub fn spacing_least_squares(r: &[f64]) -> Vec<f64> {
    let m = r.len().saturating_sub(1);
    if m == 0 {
        return Vec::new();
    }
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let rhs: Vec<f64> = (0..m).map(|j| c * (r[j] - r[j + 1])).collect();
    // Thomas algorithm on tridiag(-1/2, 1, -1/2).
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = -0.5;
    dp[0] = rhs[0];
    for i in 1..m {
        let denom = 1.0 + 0.5 * cp[i - 1];
        cp[i] = -0.5 / denom;
        dp[i] = (rhs[i] + 0.5 * dp[i - 1]) / denom;
    }
    let mut out = vec![0.0; m];
    out[m - 1] = dp[m - 1];
    for i in (0..m - 1).rev() {
        out[i] = dp[i] - cp[i] * out[i + 1];
    }
    out
}
