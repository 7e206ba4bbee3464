//! Skorokhod problems: the one-dimensional reflection map, polyhedral domains
//! with constant reflection directions, and boundary local times.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::geometry::{build_matrices, spacing_least_squares, spectral_radius, DEFAULT_SPECTRAL_TOL};
use crate::path::{Ensemble, MultiPath, Path, TimeGrid};
use crate::rng::{aux_rng, fill_normals};
use crate::sde::{RankEnsemble, RankPath};

/// Tolerance on `<d_i, eta_i> = 1`.
const DIRECTION_TOL: f64 = 1e-12;
/// Feasibility slack allowed for `psi(0)` and audited solutions.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// One face `{x : <normal, x> >= offset}` with constant reflection direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Face {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub direction: Vec<f64>,
}

/// Intersection of half-spaces with a reflection direction per face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainFields")]
pub struct PolyhedralDomain {
    dim: usize,
    faces: Vec<Face>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFields {
    dim: usize,
    faces: Vec<Face>,
}

impl TryFrom<DomainFields> for PolyhedralDomain {
    type Error = Error;

    fn try_from(f: DomainFields) -> Result<Self> {
        Self::new(f.dim, f.faces)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PolyhedralDomain {
    /// Validates unit normals and `<d_i, eta_i> = 1`; linear independence of
    /// the directions is checked by [`build_matrices`].
    pub fn new(dim: usize, faces: Vec<Face>) -> Result<Self> {
        if dim == 0 || faces.is_empty() {
            return Err(invalid("domain needs a positive dimension and at least one face"));
        }
        if faces.len() > dim {
            return Err(invalid(format!(
                "{} faces with linearly independent directions cannot fit in dimension {dim}",
                faces.len()
            )));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.normal.len() != dim || f.direction.len() != dim {
                return Err(mismatch(format!("face {i} vectors do not have dimension {dim}")));
            }
            let norm = dot(&f.normal, &f.normal).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("face {i} normal has norm {norm}, expected 1")));
            }
            let ip = dot(&f.direction, &f.normal);
            if (ip - 1.0).abs() > DIRECTION_TOL {
                return Err(invalid(format!("face {i}: <d, eta> = {ip}, expected 1")));
            }
        }
        Ok(Self { dim, faces })
    }

    /// The wedge `{x_1 >= x_2 >= ... >= x_n, sum_i x_i >= 0}` with normal
    /// reflection: faces `(e_i - e_{i+1})/sqrt(2)` for `i < n` and
    /// `n^{-1/2} 1` last.
    pub fn chamber(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("chamber dimension must be positive"));
        }
        let mut faces = Vec::with_capacity(n);
        for i in 0..n - 1 {
            let mut v = vec![0.0; n];
            v[i] = 1.0 / SQRT_2;
            v[i + 1] = -1.0 / SQRT_2;
            faces.push(Face {
                normal: v.clone(),
                offset: 0.0,
                direction: v,
            });
        }
        let one = vec![1.0 / (n as f64).sqrt(); n];
        faces.push(Face {
            normal: one.clone(),
            offset: 0.0,
            direction: one,
        });
        Self::new(n, faces)
    }

    /// Single face `{x_1 >= x_2}` in the plane with normal reflection.
    pub fn two_particle_wedge() -> Self {
        let v = vec![1.0 / SQRT_2, -1.0 / SQRT_2];
        Self::new(
            2,
            vec![Face {
                normal: v.clone(),
                offset: 0.0,
                direction: v,
            }],
        )
        .expect("valid wedge")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// `<eta_i, x> - c_i`.
    pub fn slack(&self, face: usize, x: &[f64]) -> f64 {
        let f = &self.faces[face];
        dot(&f.normal, x) - f.offset
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.faces.len()).all(|i| self.slack(i, x) >= -tol)
    }

    /// Whether this is the chamber of dimension `dim` (up to rounding).
    pub fn is_chamber(&self) -> bool {
        match Self::chamber(self.dim) {
            Ok(c) => {
                c.faces.len() == self.faces.len()
                    && c.faces.iter().zip(&self.faces).all(|(a, b)| {
                        (a.offset - b.offset).abs() < 1e-12
                            && a.normal.iter().zip(&b.normal).all(|(x, y)| (x - y).abs() < 1e-12)
                            && a.direction.iter().zip(&b.direction).all(|(x, y)| (x - y).abs() < 1e-12)
                    })
            }
            Err(_) => false,
        }
    }
}

/// Solution of a Skorokhod problem on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SPSolution {
    /// Constrained path `phi = psi + eta`.
    pub phi: MultiPath,
    /// Pushing term.
    pub eta: MultiPath,
    /// Running total variation of the pushing term.
    pub tv: Path,
    /// Per-face nondecreasing local times `l_i`, with `eta = sum_i l_i d_i`.
    pub face_local_times: Vec<Path>,
    /// Sup-norm change of the local times at each sweep (empty for the 1-D map).
    pub residuals: Vec<f64>,
}

impl SPSolution {
    pub fn sweeps(&self) -> usize {
        self.residuals.len()
    }
}

/// Running pushing term `l(t) = max(0, max_{s <= t} -f(s))` of the
/// one-dimensional reflection at zero.
pub fn reflect_at_zero(f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut l = 0.0_f64;
    for &v in f {
        l = l.max(-v);
        out.push(l);
    }
    out
}

fn running_tv(grid: TimeGrid, eta: &[Vec<f64>]) -> Path {
    let mut tv = Vec::with_capacity(grid.len());
    tv.push(0.0);
    let mut acc = 0.0;
    for k in 1..grid.len() {
        let s: f64 = eta.iter().map(|c| (c[k] - c[k - 1]).powi(2)).sum();
        acc += s.sqrt();
        tv.push(acc);
    }
    Path::new(grid, tv).expect("grid length")
}

/// Reflection of a scalar path at zero: `l(t) = -min(0, inf_{s<=t} psi(s))`.
pub fn skorokhod_map_1d(psi: &Path) -> Result<SPSolution> {
    let v = psi.values();
    if v[0] < 0.0 {
        return Err(invalid(format!("psi(0) = {} lies outside [0, inf)", v[0])));
    }
    let grid = *psi.grid();
    let l = reflect_at_zero(v);
    let phi: Vec<f64> = v.iter().zip(&l).map(|(p, l)| p + l).collect();
    Ok(SPSolution {
        phi: MultiPath::new(grid, vec![phi])?,
        eta: MultiPath::new(grid, vec![l.clone()])?,
        tv: Path::new(grid, l.clone())?,
        face_local_times: vec![Path::new(grid, l)?],
        residuals: Vec::new(),
    })
}

/// Solves the Skorokhod problem on a polyhedral domain by fixed-point
/// iteration over the face local times. Each sweep visits the faces in index
/// order and replaces `l_i` by the one-dimensional reflection of face `i`'s
/// slack under the other faces' current pushing. Stops once a sweep changes
/// every `l_i` by less than `tol` in sup norm.
pub fn solve_sp(domain: &PolyhedralDomain, psi: &MultiPath, tol: f64, max_iter: usize) -> Result<SPSolution> {
    if psi.dim() != domain.dim {
        return Err(mismatch(format!("path dimension {} vs domain dimension {}", psi.dim(), domain.dim)));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let mats = build_matrices(domain)?;
    let rho = spectral_radius(&mats.q, DEFAULT_SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::Certification(format!("spectral radius of Q is {rho} >= 1")));
    }
    let x0 = psi.state(0);
    if !domain.contains(&x0, FEASIBILITY_TOL) {
        return Err(invalid("psi(0) lies outside the domain"));
    }
    solve_sp_unchecked(domain, psi, tol, max_iter)
}

/// [`solve_sp`] without the spectral certification, for callers that have
/// already certified the domain.
pub(crate) fn solve_sp_unchecked(domain: &PolyhedralDomain, psi: &MultiPath, tol: f64, max_iter: usize) -> Result<SPSolution> {
    let grid = *psi.grid();
    let len = grid.len();
    let nf = domain.faces.len();
    // cross[j][i] = <d_j, eta_i>
    let cross: Vec<Vec<f64>> = domain
        .faces
        .iter()
        .map(|fj| domain.faces.iter().map(|fi| dot(&fj.direction, &fi.normal)).collect())
        .collect();
    let base: Vec<Vec<f64>> = (0..nf)
        .map(|i| (0..len).map(|k| domain.slack(i, &psi.state(k))).collect())
        .collect();
    let mut local: Vec<Vec<f64>> = vec![vec![0.0; len]; nf];
    let mut residuals = Vec::new();
    let mut f = vec![0.0; len];
    loop {
        let mut change = 0.0_f64;
        for i in 0..nf {
            f.copy_from_slice(&base[i]);
            for (j, lj) in local.iter().enumerate() {
                let c = cross[j][i];
                if j != i && c != 0.0 {
                    for (fk, lk) in f.iter_mut().zip(lj) {
                        *fk += c * lk;
                    }
                }
            }
            let updated = reflect_at_zero(&f);
            let d = updated
                .iter()
                .zip(&local[i])
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            change = change.max(d);
            local[i] = updated;
        }
        residuals.push(change);
        if change < tol {
            break;
        }
        if residuals.len() >= max_iter {
            let tail = residuals.len().saturating_sub(10);
            return Err(Error::NonConvergence {
                iterations: residuals.len(),
                residual: change,
                history: residuals[tail..].to_vec(),
            });
        }
    }
    let eta: Vec<Vec<f64>> = (0..domain.dim)
        .map(|c| {
            (0..len)
                .map(|k| domain.faces.iter().zip(&local).map(|(face, l)| face.direction[c] * l[k]).sum())
                .collect()
        })
        .collect();
    let phi: Vec<Vec<f64>> = psi
        .components()
        .iter()
        .zip(&eta)
        .map(|(p, e)| p.iter().zip(e).map(|(a, b)| a + b).collect())
        .collect();
    let tv = running_tv(grid, &eta);
    Ok(SPSolution {
        phi: MultiPath::new(grid, phi)?,
        eta: MultiPath::new(grid, eta)?,
        tv,
        face_local_times: local.into_iter().map(|l| Path::new(grid, l).expect("grid length")).collect(),
        residuals,
    })
}

/// Outcome of checking an [`SPSolution`] against its defining properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpAudit {
    /// `max |phi - psi - eta|`.
    pub decomposition_error: f64,
    /// Most negative face slack of `phi` (0 when feasible).
    pub worst_slack: f64,
    /// Largest decrease of any local time.
    pub max_decrease: f64,
    /// Largest local-time increase over a step whose right endpoint has face
    /// slack above the boundary tolerance.
    pub off_boundary_increase: f64,
    pub local_times_start_at_zero: bool,
}

impl SpAudit {
    pub fn passes(&self, boundary_tol: f64) -> bool {
        self.decomposition_error <= 1e-12
            && self.worst_slack >= -FEASIBILITY_TOL
            && self.max_decrease == 0.0
            && self.off_boundary_increase <= boundary_tol
            && self.local_times_start_at_zero
    }
}

pub fn audit_solution(domain: &PolyhedralDomain, psi: &MultiPath, sol: &SPSolution, boundary_tol: f64) -> SpAudit {
    let len = psi.grid().len();
    let mut decomposition_error = 0.0_f64;
    for ((p, e), f) in psi.components().iter().zip(sol.eta.components()).zip(sol.phi.components()) {
        for k in 0..len {
            decomposition_error = decomposition_error.max((f[k] - p[k] - e[k]).abs());
        }
    }
    let mut worst_slack = 0.0_f64;
    let mut max_decrease = 0.0_f64;
    let mut off_boundary_increase = 0.0_f64;
    for (i, l) in sol.face_local_times.iter().enumerate() {
        let l = l.values();
        for k in 0..len {
            let s = domain.slack(i, &sol.phi.state(k));
            worst_slack = worst_slack.min(s);
            if k > 0 {
                let inc = l[k] - l[k - 1];
                max_decrease = max_decrease.max(-inc);
                if s > boundary_tol {
                    off_boundary_increase = off_boundary_increase.max(inc);
                }
            }
        }
    }
    SpAudit {
        decomposition_error,
        worst_slack,
        max_decrease,
        off_boundary_increase,
        local_times_start_at_zero: sol.face_local_times.iter().all(|l| l.values()[0] == 0.0),
    }
}

/// Running occupation estimate
/// `(1/(2 eps)) int_0^t 1{value(s)/sqrt(2) <= eps} ds` with left-point
/// quadrature.
pub fn occupation_path(path: &Path, eps: f64) -> Result<Path> {
    if !(eps > 0.0) {
        return Err(invalid(format!("occupation window must be positive, got {eps}")));
    }
    let grid = *path.grid();
    let v = path.values();
    let mut out = Vec::with_capacity(grid.len());
    out.push(0.0);
    let mut acc = 0.0;
    for k in 0..grid.steps() {
        if v[k] / SQRT_2 <= eps {
            acc += grid.step_len(k);
        }
        out.push(acc / (2.0 * eps));
    }
    Path::new(grid, out)
}

/// Occupation estimate of the local time at the horizon.
pub fn local_time_occupation(path: &Path, eps: f64) -> Result<f64> {
    Ok(occupation_path(path, eps)?.last())
}

/// Tanaka decomposition of a sampled path: the Ito sum `int sgn(B) dB`
/// (left point, `sgn(0) = -1`) and the reflection of that sum at zero. Their
/// sum approximates `|B|`.
pub fn tanaka_reconstruct(bm: &Path) -> Result<(Path, Path)> {
    let v = bm.values();
    if v[0] != 0.0 {
        return Err(invalid(format!("Tanaka decomposition needs B(0) = 0, got {}", v[0])));
    }
    let mut integral = Vec::with_capacity(v.len());
    integral.push(0.0);
    let mut acc = 0.0;
    for k in 1..v.len() {
        let sgn = if v[k - 1] > 0.0 { 1.0 } else { -1.0 };
        acc += sgn * (v[k] - v[k - 1]);
        integral.push(acc);
    }
    let local = reflect_at_zero(&integral);
    Ok((Path::new(*bm.grid(), integral)?, Path::new(*bm.grid(), local)?))
}

/// How boundary local times of the rank model are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalTimeMethod {
    /// Occupation estimator on each spacing.
    Occupation { eps: f64 },
    /// Skorokhod problem on the recentred process in the chamber, with local
    /// times recovered from the pushing term by least squares.
    Skorokhod { tol: f64, max_iter: usize },
}

impl Default for LocalTimeMethod {
    fn default() -> Self {
        Self::Skorokhod {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Driving path of the recentred process
/// `Y_i = X_(i) - mean(X) + beta(t)/sqrt(n)` without its pushing term:
/// `psi_i = X_(i)(0) - mean(X(0)) + beta_i - mean(beta) + (1 + W(t) - t)/sqrt(n)`
/// where `W` is an auxiliary Brownian motion independent of the particles.
pub fn chamber_driving_path(path: &RankPath, master_seed: u64, member: u64) -> MultiPath {
    let grid = *path.raw.grid();
    let n = path.raw.dim();
    let len = grid.len();
    let sqrt_n = (n as f64).sqrt();
    let mut rng = aux_rng(master_seed, member);
    let mut w = Vec::with_capacity(len);
    w.push(1.0);
    let mut z = [0.0];
    for k in 0..grid.steps() {
        fill_normals(&mut rng, &mut z);
        let h = grid.step_len(k);
        w.push(w[k] - h + h.sqrt() * z[0]);
    }
    let o0 = path.ordered.state(0);
    let mean0 = o0.iter().sum::<f64>() / n as f64;
    let betas = path.betas.components();
    let comps = (0..n)
        .map(|i| {
            (0..len)
                .map(|k| {
                    let bbar = betas.iter().map(|b| b[k]).sum::<f64>() / n as f64;
                    o0[i] - mean0 + betas[i][k] - bbar + w[k] / sqrt_n
                })
                .collect()
        })
        .collect();
    MultiPath::new(grid, comps).expect("consistent shapes")
}

/// Boundary local times `(L_{1,2}, ..., L_{n-1,n})` of one rank-model member.
pub fn member_local_times(
    path: &RankPath,
    method: LocalTimeMethod,
    master_seed: u64,
    member: u64,
) -> Result<Vec<Path>> {
    let grid = *path.raw.grid();
    match method {
        LocalTimeMethod::Occupation { eps } => path
            .gaps
            .iter()
            .map(|g| occupation_path(&Path::new(grid, g.clone())?, eps))
            .collect(),
        LocalTimeMethod::Skorokhod { tol, max_iter } => {
            let n = path.raw.dim();
            if n < 2 {
                return Ok(Vec::new());
            }
            let domain = PolyhedralDomain::chamber(n)?;
            let psi = chamber_driving_path(path, master_seed, member);
            let sol = solve_sp_unchecked(&domain, &psi, tol, max_iter)?;
            local_times_from_pushing(&sol, n)
        }
    }
}

/// Recovers `L` from `eta - l_n d_n = S L` by least squares, `S` being the
/// spacing matrix with columns `(e_j - e_{j+1})/sqrt(2)`.
pub fn local_times_from_pushing(sol: &SPSolution, n: usize) -> Result<Vec<Path>> {
    let grid = *sol.eta.grid();
    let len = grid.len();
    let last = sol.face_local_times[n - 1].values();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(len); n - 1];
    for k in 0..len {
        let r: Vec<f64> = (0..n).map(|i| sol.eta.component(i)[k] - last[k] * inv_sqrt_n).collect();
        let l = spacing_least_squares(&r);
        for (o, v) in out.iter_mut().zip(l) {
            o.push(v);
        }
    }
    out.into_iter().map(|v| Path::new(grid, v)).collect()
}

/// Boundary local times of every member, as an ensemble of dimension `n - 1`.
/// The domain must be the chamber of the ensemble's dimension.
pub fn rank_local_times(re: &RankEnsemble, domain: &PolyhedralDomain, method: LocalTimeMethod) -> Result<Option<Ensemble>> {
    let n = re.spec().n();
    if domain.dim() != n || !domain.is_chamber() {
        return Err(invalid(format!("local times need the {n}-dimensional chamber")));
    }
    if n < 2 {
        return Ok(None);
    }
    if let LocalTimeMethod::Skorokhod { .. } = method {
        let mats = build_matrices(domain)?;
        let rho = spectral_radius(&mats.q, DEFAULT_SPECTRAL_TOL)?;
        if rho >= 1.0 {
            return Err(Error::Certification(format!("spectral radius of Q is {rho} >= 1")));
        }
    }
    let seed = re.config().master_seed;
    let members = re
        .members()
        .par_iter()
        .enumerate()
        .map(|(j, p)| member_local_times(p, method, seed, j as u64).and_then(MultiPath::from_paths))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members, re.config().lineage()).map(Some)
}
