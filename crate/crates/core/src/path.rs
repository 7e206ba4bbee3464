//! Discretely sampled paths, ensembles of paths and path-space metrics.
//!
//! Every path lives on a uniform [`TimeGrid`]; suprema over time are maxima
//! over grid points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};

/// Relative slack used when deciding whether `T / dt` is an integer.
const GRID_SNAP: f64 = 1e-9;

/// Uniform grid `0 = t_0 < t_1 < ... < t_M = T` with spacing `dt`; the final
/// step is shortened when `dt` does not divide `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFields")]
pub struct TimeGrid {
    #[serde(rename = "T")]
    horizon: f64,
    dt: f64,
    #[serde(skip)]
    steps: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFields {
    #[serde(rename = "T")]
    horizon: f64,
    dt: f64,
}

impl TryFrom<GridFields> for TimeGrid {
    type Error = crate::Error;

    fn try_from(f: GridFields) -> Result<Self> {
        Self::new(f.horizon, f.dt)
    }
}

/// Builds the uniform grid on `[0, horizon]` with spacing `dt`.
pub fn make_grid(horizon: f64, dt: f64) -> Result<TimeGrid> {
    TimeGrid::new(horizon, dt)
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("step must be positive, got {dt}")));
        }
        if dt > horizon {
            return Err(invalid(format!("step {dt} exceeds horizon {horizon}")));
        }
        let ratio = horizon / dt;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= GRID_SNAP * ratio {
            nearest as usize
        } else {
            ratio.ceil() as usize
        };
        Ok(Self {
            horizon,
            dt,
            steps: steps.max(1),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points `M + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Length of step `k`, i.e. `t_{k+1} - t_k`.
    pub fn step_len(&self, k: usize) -> f64 {
        self.time(k + 1) - self.time(k)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }
}

/// A real path sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(mismatch(format!(
                "path has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// `n` real paths on a shared grid, i.e. a sample of `C^n[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPath {
    grid: TimeGrid,
    components: Vec<Vec<f64>>,
}

impl MultiPath {
    pub fn new(grid: TimeGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a multipath needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(mismatch(format!(
                    "component {i} has {} values for a grid of {} points",
                    c.len(),
                    grid.len()
                )));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn from_paths(paths: Vec<Path>) -> Result<Self> {
        let grid = match paths.first() {
            Some(p) => p.grid,
            None => return Err(invalid("a multipath needs at least one component")),
        };
        if paths.iter().any(|p| p.grid != grid) {
            return Err(mismatch("components live on different grids"));
        }
        Self::new(grid, paths.into_iter().map(Path::into_values).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn path(&self, i: usize) -> Path {
        Path {
            grid: self.grid,
            values: self.components[i].clone(),
        }
    }

    /// State vector at grid index `k`.
    pub fn state(&self, k: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[k]).collect()
    }

    /// Pointwise map over every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    /// Pointwise combination of two multipaths on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_compatible(self, other)?;
        Ok(Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }
}

impl From<Path> for MultiPath {
    fn from(p: Path) -> Self {
        Self {
            grid: p.grid,
            components: vec![p.values],
        }
    }
}

/// Record of how an ensemble's randomness was derived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: Option<u64>,
    /// Stream identifier of each member's generator.
    pub member_streams: Vec<u64>,
}

/// `m` multipaths sharing grid and dimension; an empirical path-space law.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    dim: usize,
    members: Vec<MultiPath>,
    lineage: SeedLineage,
}

impl Ensemble {
    pub fn new(members: Vec<MultiPath>, lineage: SeedLineage) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| invalid("an ensemble needs at least one member"))?;
        let (grid, dim) = (first.grid, first.dim());
        for (j, m) in members.iter().enumerate() {
            if m.grid != grid || m.dim() != dim {
                return Err(mismatch(format!(
                    "member {j} does not share grid and dimension with member 0"
                )));
            }
        }
        Ok(Self {
            grid,
            dim,
            members,
            lineage,
        })
    }

    pub fn unseeded(members: Vec<MultiPath>) -> Result<Self> {
        Self::new(members, SeedLineage::default())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[MultiPath] {
        &self.members
    }

    pub fn member(&self, j: usize) -> &MultiPath {
        &self.members[j]
    }

    pub fn lineage(&self) -> &SeedLineage {
        &self.lineage
    }

    /// Values of component `i` at grid index `k`, one per member.
    pub fn marginal(&self, i: usize, k: usize) -> Vec<f64> {
        self.members.iter().map(|m| m.component(i)[k]).collect()
    }

    /// Terminal values of component `i`.
    pub fn terminal(&self, i: usize) -> Vec<f64> {
        self.marginal(i, self.grid.steps())
    }
}

/// The path-space metrics used throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathMetric {
    /// `sup_t |a(t) - b(t)|`; for several components the largest coordinate sup.
    Uniform,
    /// `sqrt((1/n) sum_i sup_t |a_i - b_i|^2)`.
    AveragedUniform,
    /// `sup_t sqrt((1/n) sum_i (a_i(t) - b_i(t))^2)`.
    UniformEuclidean,
    /// `max_k c_k d_k / (1 + d_k)` with `d_k` the uniform distance on `[0, k]`,
    /// `k = 1..ceil(T)`.
    LocallyUniform { weights: Vec<f64> },
}

impl PathMetric {
    /// Locally uniform metric with `c_k = k^{-1/2} exp(-2 K^2 (k + 4))`,
    /// the weights under which the stopped-process constant is `4 kappa^2`.
    pub fn locally_uniform_default(lipschitz: f64, horizon: f64) -> Self {
        let blocks = horizon.ceil().max(1.0) as usize;
        Self::LocallyUniform {
            weights: default_block_weights(lipschitz, blocks),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::AveragedUniform => "averaged_uniform",
            Self::UniformEuclidean => "uniform_euclidean",
            Self::LocallyUniform { .. } => "locally_uniform",
        }
    }

    pub fn eval(&self, a: &MultiPath, b: &MultiPath) -> Result<f64> {
        metric_eval(self, a, b)
    }
}

/// `c_k = k^{-1/2} exp(-2 K^2 (k + 4))` for `k = 1..=blocks`.
pub fn default_block_weights(lipschitz: f64, blocks: usize) -> Vec<f64> {
    (1..=blocks)
        .map(|k| {
            let k = k as f64;
            k.powf(-0.5) * (-2.0 * lipschitz * lipschitz * (k + 4.0)).exp()
        })
        .collect()
}

pub(crate) fn check_compatible(a: &MultiPath, b: &MultiPath) -> Result<()> {
    if a.grid != b.grid {
        return Err(mismatch("paths live on different grids"));
    }
    if a.dim() != b.dim() {
        return Err(mismatch(format!(
            "dimension {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Evaluates `metric` between two multipaths on a shared grid.
pub fn metric_eval(metric: &PathMetric, a: &MultiPath, b: &MultiPath) -> Result<f64> {
    check_compatible(a, b)?;
    let n = a.dim() as f64;
    let value = match metric {
        PathMetric::Uniform => a
            .components
            .iter()
            .zip(&b.components)
            .fold(0.0_f64, |acc, (x, y)| acc.max(sup_abs_diff(x, y))),
        PathMetric::AveragedUniform => {
            let s: f64 = a
                .components
                .iter()
                .zip(&b.components)
                .map(|(x, y)| sup_abs_diff(x, y).powi(2))
                .sum();
            (s / n).sqrt()
        }
        PathMetric::UniformEuclidean => {
            let mut best = 0.0_f64;
            for k in 0..a.grid.len() {
                let s: f64 = a
                    .components
                    .iter()
                    .zip(&b.components)
                    .map(|(x, y)| (x[k] - y[k]).powi(2))
                    .sum();
                best = best.max(s / n);
            }
            best.sqrt()
        }
        PathMetric::LocallyUniform { weights } => locally_uniform(weights, a, b)?,
    };
    Ok(value)
}

fn locally_uniform(weights: &[f64], a: &MultiPath, b: &MultiPath) -> Result<f64> {
    let grid = a.grid;
    let blocks = grid.horizon().ceil().max(1.0) as usize;
    if weights.len() < blocks {
        return Err(invalid(format!(
            "locally uniform metric needs {blocks} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|&c| !(c > 0.0)) {
        return Err(invalid("locally uniform weights must be positive"));
    }
    // Running sup over all coordinates, read off at each block end.
    let mut running = 0.0_f64;
    let mut best = 0.0_f64;
    let mut block = 1usize;
    for k in 0..grid.len() {
        let t = grid.time(k);
        while block <= blocks && t > block as f64 + GRID_SNAP {
            best = best.max(weights[block - 1] * running / (1.0 + running));
            block += 1;
        }
        for (x, y) in a.components.iter().zip(&b.components) {
            running = running.max((x[k] - y[k]).abs());
        }
    }
    while block <= blocks {
        best = best.max(weights[block - 1] * running / (1.0 + running));
        block += 1;
    }
    Ok(best)
}

/// Both sides of `UniformEuclidean <= AveragedUniform`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    pub uniform_euclidean: f64,
    pub averaged_uniform: f64,
    pub holds: bool,
}

pub fn metric_dominance_check(a: &MultiPath, b: &MultiPath) -> Result<DominanceReport> {
    let uniform_euclidean = metric_eval(&PathMetric::UniformEuclidean, a, b)?;
    let averaged_uniform = metric_eval(&PathMetric::AveragedUniform, a, b)?;
    Ok(DominanceReport {
        uniform_euclidean,
        averaged_uniform,
        holds: uniform_euclidean <= averaged_uniform * (1.0 + 1e-12) + 1e-300,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t: f64, dt: f64) -> TimeGrid {
        make_grid(t, dt).unwrap()
    }

    fn mp(g: TimeGrid, comps: Vec<Vec<f64>>) -> MultiPath {
        MultiPath::new(g, comps).unwrap()
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid(1.0, 0.5).points(), vec![0.0, 0.5, 1.0]);
        assert_eq!(grid(1.0, 1.0).points(), vec![0.0, 1.0]);
        let p = grid(1.0, 0.3).points();
        assert_eq!(p.len(), 5);
        for (x, y) in p.iter().zip([0.0, 0.3, 0.6, 0.9, 1.0]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(grid(1.0, 0.1).steps(), 10);
        assert_eq!(grid(1.0, 1e-3).steps(), 1000);
        assert_eq!(grid(2.5, 1.0).points(), vec![0.0, 1.0, 2.0, 2.5]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(0.0, 0.1).is_err());
        assert!(make_grid(1.0, 0.0).is_err());
        assert!(make_grid(-1.0, 0.1).is_err());
        assert!(make_grid(1.0, 2.0).is_err());
        assert!(make_grid(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn metrics_vanish_on_identical_inputs() {
        let g = grid(3.0, 0.25);
        let a = mp(g, vec![g.points(), g.points().iter().map(|t| t.sin()).collect()]);
        for m in [
            PathMetric::Uniform,
            PathMetric::AveragedUniform,
            PathMetric::UniformEuclidean,
            PathMetric::locally_uniform_default(0.5, 3.0),
        ] {
            assert_eq!(metric_eval(&m, &a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_shift_collapses_to_shift() {
        let g = grid(1.0, 0.1);
        let a = mp(g, vec![g.points(), vec![1.0; g.len()], vec![-2.0; g.len()]]);
        let b = a.map(|v| v + 0.75);
        let avg = metric_eval(&PathMetric::AveragedUniform, &a, &b).unwrap();
        let euc = metric_eval(&PathMetric::UniformEuclidean, &a, &b).unwrap();
        assert!((avg - 0.75).abs() < 1e-12);
        assert!((euc - 0.75).abs() < 1e-12);
        let rep = metric_dominance_check(&a, &b).unwrap();
        assert!(rep.holds);
        assert!((rep.averaged_uniform - rep.uniform_euclidean).abs() < 1e-12);
    }

    #[test]
    fn identical_dominance_is_zero_zero() {
        let g = grid(1.0, 0.1);
        let a = mp(g, vec![g.points()]);
        let rep = metric_dominance_check(&a, &a).unwrap();
        assert_eq!((rep.uniform_euclidean, rep.averaged_uniform), (0.0, 0.0));
        assert!(rep.holds);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let g = grid(1.0, 0.1);
        let a = mp(g, vec![g.points()]);
        let b = mp(g, vec![g.points(), g.points()]);
        assert!(metric_eval(&PathMetric::Uniform, &a, &b).is_err());
        let h = grid(1.0, 0.2);
        let c = mp(h, vec![h.points()]);
        assert!(metric_eval(&PathMetric::Uniform, &a, &c).is_err());
    }

    #[test]
    fn locally_uniform_blocks() {
        // Difference is 0 on [0,1], jumps to 3 on (1,2].
        let g = grid(2.0, 0.5);
        let a = mp(g, vec![vec![0.0; 5]]);
        let b = mp(g, vec![vec![0.0, 0.0, 0.0, 3.0, 3.0]]);
        let m = PathMetric::LocallyUniform {
            weights: vec![1.0, 0.5],
        };
        let v = metric_eval(&m, &a, &b).unwrap();
        assert!((v - 0.5 * 3.0 / 4.0).abs() < 1e-15);
        let short = PathMetric::LocallyUniform { weights: vec![1.0] };
        assert!(metric_eval(&short, &a, &b).is_err());
    }

    #[test]
    fn default_weights_follow_rule() {
        let w = default_block_weights(0.0, 3);
        assert_eq!(w[0], 1.0);
        assert!((w[2] - 3f64.powf(-0.5)).abs() < 1e-15);
        let w = default_block_weights(1.0, 2);
        assert!((w[1] - 2f64.powf(-0.5) * (-12f64).exp()).abs() < 1e-20);
    }

    fn arb_multipath(dim: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0..5.0f64, len), dim)
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in arb_multipath(3, 11),
            b in arb_multipath(3, 11),
            c in arb_multipath(3, 11),
            shift in -3.0..3.0f64,
        ) {
            let g = grid(2.0, 0.2);
            let (a, b, c) = (mp(g, a), mp(g, b), mp(g, c));
            for m in [
                PathMetric::Uniform,
                PathMetric::AveragedUniform,
                PathMetric::UniformEuclidean,
                PathMetric::LocallyUniform { weights: vec![1.0, 0.7] },
            ] {
                let ab = metric_eval(&m, &a, &b).unwrap();
                let ba = metric_eval(&m, &b, &a).unwrap();
                let ac = metric_eval(&m, &a, &c).unwrap();
                let cb = metric_eval(&m, &c, &b).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, ba);
                prop_assert!(ab <= ac + cb + 1e-12);
                let sa = a.map(|v| v + shift);
                let sb = b.map(|v| v + shift);
                let shifted = metric_eval(&m, &sa, &sb).unwrap();
                prop_assert!((shifted - ab).abs() < 1e-12);
            }
            let rep = metric_dominance_check(&a, &b).unwrap();
            prop_assert!(rep.holds);
        }
    }
}
