//! Python bindings: ensembles, rank-model simulation, local times,
//! certificates, exact transport and the tail experiments.

use conc_lab::concentration::{self, base_threshold, default_r_grid, Thm1Settings};
use conc_lab::geometry;
use conc_lab::io;
use conc_lab::path::{Ensemble, MultiPath, Path, PathMetric, TimeGrid};
use conc_lab::sde::{self, DiffusionSpec, DriftSpec, RankEnsemble, RankModelSpec, SdeSystem, SimConfig};
use conc_lab::skorokhod::{self, LocalTimeMethod, PolyhedralDomain};
use conc_lab::transport;
use conc_lab::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(conc_lab, CertificationError, PyException, "A reflection certificate could not be established.");
create_exception!(conc_lab, NonConvergenceError, PyException, "An iterative solver exhausted its budget.");

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::InvalidInput(_) | Error::Mismatch(_) | Error::Json(_) => PyValueError::new_err(msg),
        Error::Io(_) => PyIOError::new_err(msg),
        Error::DiffusionBound { .. } | Error::Certification(_) => CertificationError::new_err(msg),
        Error::NonConvergence { .. } => NonConvergenceError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for conc_lab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Serializable report to plain Python dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn parse_metric(kind: &str, weights: Option<Vec<f64>>) -> PyResult<PathMetric> {
    Ok(match kind {
        "uniform" => PathMetric::Uniform,
        "averaged_uniform" => PathMetric::AveragedUniform,
        "uniform_euclidean" => PathMetric::UniformEuclidean,
        "locally_uniform" => PathMetric::LocallyUniform {
            weights: weights.ok_or_else(|| PyValueError::new_err("locally_uniform needs weights"))?,
        },
        other => return Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
    })
}

fn parse_method(method: &str, eps: f64, tol: f64, max_iter: usize) -> PyResult<LocalTimeMethod> {
    match method {
        "skorokhod" => Ok(LocalTimeMethod::Skorokhod { tol, max_iter }),
        "occupation" => Ok(LocalTimeMethod::Occupation { eps }),
        other => Err(PyValueError::new_err(format!("unknown local-time method {other:?}"))),
    }
}

/// Uniform time grid on `[0, T]`.
#[pyclass(name = "TimeGrid", module = "conc_lab", frozen, from_py_object)]
#[derive(Clone)]
struct PyTimeGrid(TimeGrid);

#[pymethods]
impl PyTimeGrid {
    #[new]
    fn new(horizon: f64, dt: f64) -> PyResult<Self> {
        TimeGrid::new(horizon, dt).py().map(Self)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn points(&self) -> Vec<f64> {
        self.0.points()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("TimeGrid(T={}, dt={})", self.0.horizon(), self.0.dt())
    }
}

/// Equal-weight ensemble of multidimensional paths on a shared grid.
#[pyclass(name = "Ensemble", module = "conc_lab", frozen, from_py_object)]
#[derive(Clone)]
struct PyEnsemble(Ensemble);

#[pymethods]
impl PyEnsemble {
    /// Builds an ensemble from `members[j][i][k]`: member, component, grid index.
    #[new]
    fn new(grid: &PyTimeGrid, members: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let members = members.into_iter().map(|m| MultiPath::new(grid.0, m)).collect::<conc_lab::Result<Vec<_>>>().py()?;
        Ensemble::unseeded(members).py().map(Self)
    }

    #[getter]
    fn grid(&self) -> PyTimeGrid {
        PyTimeGrid(*self.0.grid())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn master_seed(&self) -> Option<u64> {
        self.0.lineage().master_seed
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Components of member `j`, one list per coordinate.
    fn member(&self, j: usize) -> PyResult<Vec<Vec<f64>>> {
        if j >= self.0.len() {
            return Err(PyValueError::new_err(format!("member {j} out of range")));
        }
        Ok(self.0.member(j).components().to_vec())
    }

    /// Values of coordinate `i` at grid index `k` across members.
    fn marginal(&self, i: usize, k: usize) -> PyResult<Vec<f64>> {
        if i >= self.0.dim() || k >= self.0.grid().len() {
            return Err(PyValueError::new_err("coordinate or grid index out of range"));
        }
        Ok(self.0.marginal(i, k))
    }

    fn terminal(&self, i: usize) -> PyResult<Vec<f64>> {
        self.marginal(i, self.0.grid().steps())
    }

    /// Long-format CSV `member,time,x1..xn`.
    fn to_csv(&self) -> String {
        io::ensemble_to_csv(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Ensemble(len={}, dim={}, steps={})", self.0.len(), self.0.dim(), self.0.grid().steps())
    }
}

/// Simulated rank-based particle system.
#[pyclass(name = "RankEnsemble", module = "conc_lab", frozen)]
struct PyRankEnsemble(RankEnsemble);

#[pymethods]
impl PyRankEnsemble {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn deltas(&self) -> Vec<f64> {
        self.0.spec().deltas.clone()
    }

    /// Particle positions by label.
    fn raw(&self) -> PyEnsemble {
        PyEnsemble(self.0.raw())
    }

    /// Positions sorted in decreasing order.
    fn ordered(&self) -> PyEnsemble {
        PyEnsemble(sde::ordered_processes(&self.0))
    }

    /// Adjacent gaps of the ordered positions; `None` for a single particle.
    fn gaps(&self) -> Option<PyEnsemble> {
        self.0.gaps().map(PyEnsemble)
    }

    /// Brownian motions driving each rank.
    fn betas(&self) -> PyEnsemble {
        PyEnsemble(sde::extract_beta(&self.0))
    }

    fn center_of_mass(&self) -> PyEnsemble {
        PyEnsemble(sde::center_of_mass(&self.0))
    }

    /// Boundary local times between adjacent ranks, one coordinate per gap.
    #[pyo3(signature = (method = "skorokhod", eps = 0.01, tol = 1e-10, max_iter = 10_000))]
    fn local_times(&self, py: Python<'_>, method: &str, eps: f64, tol: f64, max_iter: usize) -> PyResult<Option<PyEnsemble>> {
        let method = parse_method(method, eps, tol, max_iter)?;
        let n = self.0.spec().n();
        let domain = PolyhedralDomain::chamber(n).py()?;
        let out = py.detach(|| skorokhod::rank_local_times(&self.0, &domain, method)).py()?;
        Ok(out.map(PyEnsemble))
    }
}

/// Euler–Maruyama ensemble of independent coordinates
/// `dX_i = drift_i dt + sigma_i dW_i`.
#[pyfunction]
#[pyo3(signature = (drift, horizon, dt, n_paths, seed, sigma = None, x0 = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_brownian(
    py: Python<'_>,
    drift: Vec<f64>,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    sigma: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
) -> PyResult<PyEnsemble> {
    let n = drift.len();
    let sigma = sigma.unwrap_or_else(|| vec![1.0; n]);
    if sigma.len() != n {
        return Err(PyValueError::new_err("sigma and drift differ in length"));
    }
    let diffusions = sigma.iter().map(|&s| DiffusionSpec::constant(s)).collect::<conc_lab::Result<Vec<_>>>().py()?;
    let drifts = drift.iter().map(|&m| DriftSpec::constant(m)).collect();
    let sys = SdeSystem::new(drifts, diffusions, x0.unwrap_or_else(|| vec![0.0; n])).py()?;
    let cfg = SimConfig::new(TimeGrid::new(horizon, dt).py()?, n_paths, seed).py()?;
    py.detach(|| sde::euler_maruyama(&sys, &cfg)).py().map(PyEnsemble)
}

/// Rank-based particles: the particle ranked `j` from the top drifts at `deltas[j]`.
#[pyfunction]
#[pyo3(signature = (deltas, horizon, dt, n_paths, seed, x0 = None))]
fn simulate_rank(
    py: Python<'_>,
    deltas: Vec<f64>,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> PyResult<PyRankEnsemble> {
    let n = deltas.len();
    let spec = RankModelSpec::new(deltas, x0.unwrap_or_else(|| vec![0.0; n])).py()?;
    let cfg = SimConfig::new(TimeGrid::new(horizon, dt).py()?, n_paths, seed).py()?;
    py.detach(|| sde::simulate_rank_model(&spec, &cfg)).py().map(PyRankEnsemble)
}

/// Distance between two paths given as lists of components on `grid`.
#[pyfunction]
#[pyo3(signature = (a, b, grid, kind = "averaged_uniform", weights = None))]
fn path_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, grid: &PyTimeGrid, kind: &str, weights: Option<Vec<f64>>) -> PyResult<f64> {
    let metric = parse_metric(kind, weights)?;
    let a = MultiPath::new(grid.0, a).py()?;
    let b = MultiPath::new(grid.0, b).py()?;
    metric.eval(&a, &b).py()
}

/// Exact empirical `W_p`; returns `(w, assignment)`.
#[pyfunction]
#[pyo3(signature = (a, b, p = 2, kind = "averaged_uniform", weights = None))]
fn wasserstein(py: Python<'_>, a: &PyEnsemble, b: &PyEnsemble, p: u32, kind: &str, weights: Option<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let metric = parse_metric(kind, weights)?;
    let (w, plan) = py.detach(|| transport::wasserstein_exact(&a.0, &b.0, p, &metric)).py()?;
    Ok((w, plan.assignment))
}

/// Reflection at zero of a scalar path; returns `(phi, l)`.
#[pyfunction]
fn skorokhod_map_1d(values: Vec<f64>, grid: &PyTimeGrid) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sol = skorokhod::skorokhod_map_1d(&Path::new(grid.0, values).py()?).py()?;
    Ok((sol.phi.component(0).to_vec(), sol.face_local_times[0].values().to_vec()))
}

/// Lipschitz certificate of the Skorokhod map on the `n`-particle chamber.
#[pyfunction]
fn certify_chamber(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    let cert = geometry::certificate(&PolyhedralDomain::chamber(n).py()?).py()?;
    to_py(py, &cert)
}

/// Certificate of a domain given as JSON `{dim, faces: [...]}`. Without `u`
/// the vector `(I - |Q|)^{-1} 1` is used.
#[pyfunction]
#[pyo3(signature = (domain_json, u = None, delta = None))]
fn certify_domain<'py>(py: Python<'py>, domain_json: &str, u: Option<Vec<f64>>, delta: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let domain: PolyhedralDomain = serde_json::from_str(domain_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let q = geometry::build_matrices(&domain).py()?.q;
    let rho = geometry::spectral_radius(&q, geometry::DEFAULT_SPECTRAL_TOL).py()?;
    if rho >= 1.0 {
        return Err(CertificationError::new_err(format!("spectral radius of Q is {rho} >= 1")));
    }
    let cert = match (u, delta) {
        (Some(u), Some(d)) => geometry::certificate_with_u(&domain, &u, d),
        (None, None) => geometry::neumann_u_vector(&q).and_then(|(u, d)| geometry::certificate_with_u(&domain, &u, d)),
        _ => return Err(PyValueError::new_err("u and delta must be given together")),
    }
    .py()?;
    to_py(py, &cert)
}

/// Spectral radius of the chamber's reflection matrix by power iteration.
#[pyfunction]
fn chamber_spectral_radius(n: usize) -> PyResult<f64> {
    geometry::spectral_radius(&geometry::chamber_q(n), geometry::DEFAULT_SPECTRAL_TOL).py()
}

#[pyfunction]
#[pyo3(signature = (samples, tol = 1e-10))]
fn orlicz_norm(py: Python<'_>, samples: Vec<f64>, tol: f64) -> PyResult<Bound<'_, PyAny>> {
    let r = transport::orlicz_norm(&samples, tol).py()?;
    to_py(py, &r)
}

#[pyfunction]
fn h_function(x: f64) -> PyResult<f64> {
    transport::h_function(x).py()
}

#[pyfunction]
fn rank_model_entropy(deltas: Vec<f64>, horizon: f64) -> f64 {
    transport::rank_model_entropy(&deltas, horizon)
}

#[pyfunction]
#[pyo3(signature = (horizon, n, k1 = 0.0, k2 = 0.0, k = 0.0, kappa = 1.0))]
fn qtci_constants(py: Python<'_>, horizon: f64, n: usize, k1: f64, k2: f64, k: f64, kappa: f64) -> PyResult<Bound<'_, PyAny>> {
    let c = transport::qtci_constants(k1, k2, k, kappa, horizon, n).py()?;
    to_py(py, &c)
}

/// `W_p(P, Q) <= sqrt(2 C H)` with an optional same-law baseline ensemble.
#[pyfunction]
#[pyo3(signature = (p_ens, q_ens, c, h, p = 2, kind = "averaged_uniform", baseline = None))]
#[allow(clippy::too_many_arguments)]
fn qtci_verify<'py>(
    py: Python<'py>,
    p_ens: &PyEnsemble,
    q_ens: &PyEnsemble,
    c: f64,
    h: f64,
    p: u32,
    kind: &str,
    baseline: Option<PyEnsemble>,
) -> PyResult<Bound<'py, PyAny>> {
    let metric = parse_metric(kind, None)?;
    let rep = py
        .detach(|| transport::qtci_verify(&p_ens.0, &q_ens.0, c, h, p, &metric, baseline.as_ref().map(|b| &b.0)))
        .py()?;
    to_py(py, &rep)
}

/// `2 exp(-r^2 / (8C))` and whether `r` lies in its valid range.
#[pyfunction]
fn bound_preq(c: f64, r: f64) -> PyResult<(f64, bool)> {
    let b = concentration::bound_preq(c, r).py()?;
    Ok((b.value, b.valid))
}

/// Maximal-local-time tail experiment; returns `(report, chi)`.
#[pyfunction]
#[pyo3(signature = (n, n_paths, seed, horizon = 1.0, dt = 1e-3, deltas = None, r_grid = None,
                    scale_exponent = 2.5, method = "skorokhod", eps = 0.01, tol = 1e-10, max_iter = 10_000))]
#[allow(clippy::too_many_arguments)]
fn max_local_time_experiment<'py>(
    py: Python<'py>,
    n: usize,
    n_paths: usize,
    seed: u64,
    horizon: f64,
    dt: f64,
    deltas: Option<Vec<f64>>,
    r_grid: Option<Vec<f64>>,
    scale_exponent: f64,
    method: &str,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Bound<'py, PyAny>, Vec<f64>)> {
    let settings = Thm1Settings {
        deltas: deltas.unwrap_or_else(|| vec![0.0; n]),
        r_grid: r_grid.unwrap_or_else(|| default_r_grid(base_threshold() + 2.75, 12)),
        scale_exponent,
        method: parse_method(method, eps, tol, max_iter)?,
    };
    let cfg = SimConfig::new(TimeGrid::new(horizon, dt).py()?, n_paths, seed).py()?;
    let (rep, chi) = py.detach(|| concentration::thm1_experiment(n, &settings, &cfg)).py()?;
    Ok((to_py(py, &rep)?, chi))
}

/// Tail report of arbitrary samples of the maximal local time.
#[pyfunction]
#[pyo3(signature = (chi, n, horizon, r_grid, scale_exponent = 2.5))]
fn chi_tail_report(py: Python<'_>, chi: Vec<f64>, n: usize, horizon: f64, r_grid: Vec<f64>, scale_exponent: f64) -> PyResult<Bound<'_, PyAny>> {
    let rep = concentration::chi_tail_report(&chi, n, horizon, &r_grid, scale_exponent).py()?;
    to_py(py, &rep)
}

#[pymodule(name = "conc_lab")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", conc_lab::VERSION)?;
    m.add("CertificationError", m.py().get_type::<CertificationError>())?;
    m.add("NonConvergenceError", m.py().get_type::<NonConvergenceError>())?;
    m.add_class::<PyTimeGrid>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyRankEnsemble>()?;
    m.add_function(wrap_pyfunction!(simulate_brownian, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(path_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(skorokhod_map_1d, m)?)?;
    m.add_function(wrap_pyfunction!(certify_chamber, m)?)?;
    m.add_function(wrap_pyfunction!(certify_domain, m)?)?;
    m.add_function(wrap_pyfunction!(chamber_spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(orlicz_norm, m)?)?;
    m.add_function(wrap_pyfunction!(h_function, m)?)?;
    m.add_function(wrap_pyfunction!(rank_model_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(qtci_constants, m)?)?;
    m.add_function(wrap_pyfunction!(qtci_verify, m)?)?;
    m.add_function(wrap_pyfunction!(bound_preq, m)?)?;
    m.add_function(wrap_pyfunction!(max_local_time_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(chi_tail_report, m)?)?;
    Ok(())
}
