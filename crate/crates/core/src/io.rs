//! CSV and JSON encodings of paths, ensembles, Skorokhod solutions and tail
//! reports.
//!
//! Numbers are written with `f64`'s `Display`, which prints the shortest
//! string that round-trips, so output is byte-stable across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::concentration::TailReport;
use crate::error::{invalid, mismatch, Result};
use crate::path::{Ensemble, MultiPath, TimeGrid};
use crate::skorokhod::SPSolution;

/// JSON envelope `{grid: {T, dt}, values: [[component 1], [component 2], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEnvelope {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
    /// Extra named columns (for example local times of a Skorokhod solution).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<NamedSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl PathEnvelope {
    pub fn from_multipath(p: &MultiPath) -> Self {
        Self {
            grid: *p.grid(),
            values: p.components().to_vec(),
            extra: Vec::new(),
        }
    }

    pub fn into_multipath(self) -> Result<MultiPath> {
        MultiPath::new(self.grid, self.values)
    }
}

pub fn multipath_to_json(p: &MultiPath) -> Result<String> {
    Ok(serde_json::to_string(&PathEnvelope::from_multipath(p))?)
}

pub fn multipath_from_json(s: &str) -> Result<MultiPath> {
    serde_json::from_str::<PathEnvelope>(s)?.into_multipath()
}

fn write_rows(out: &mut String, grid: &TimeGrid, columns: &[&[f64]], prefix: Option<u64>) {
    for k in 0..grid.len() {
        if let Some(m) = prefix {
            let _ = write!(out, "{m},");
        }
        let _ = write!(out, "{}", grid.time(k));
        for c in columns {
            let _ = write!(out, ",{}", c[k]);
        }
        out.push('\n');
    }
}

fn header(prefix: &str, names: impl IntoIterator<Item = String>) -> String {
    let mut h = String::from(prefix);
    for n in names {
        h.push(',');
        h.push_str(&n);
    }
    h.push('\n');
    h
}

/// `time,x1,...,xn` with one row per grid point.
pub fn multipath_to_csv(p: &MultiPath) -> String {
    let mut out = header("time", (1..=p.dim()).map(|i| format!("x{i}")));
    let cols: Vec<&[f64]> = p.components().iter().map(|c| c.as_slice()).collect();
    write_rows(&mut out, p.grid(), &cols, None);
    out
}

/// Parses [`multipath_to_csv`] output; the grid is recovered from the time
/// column and must be uniform.
pub fn multipath_from_csv(s: &str) -> Result<MultiPath> {
    let mut reader = csv::Reader::from_reader(s.as_bytes());
    let headers = reader.headers().map_err(|e| invalid(e.to_string()))?.clone();
    if headers.get(0) != Some("time") || headers.len() < 2 {
        return Err(invalid("CSV must start with a time column and one value column"));
    }
    let dim = headers.len() - 1;
    let mut times = Vec::new();
    let mut comps: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for rec in reader.records() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let mut fields = rec.iter().map(|f| f.trim().parse::<f64>().map_err(|e| invalid(format!("{f:?}: {e}"))));
        times.push(fields.next().ok_or_else(|| invalid("empty row"))??);
        for c in comps.iter_mut() {
            c.push(fields.next().ok_or_else(|| invalid("short row"))??);
        }
    }
    if times.len() < 2 || times[0] != 0.0 {
        return Err(invalid("time column must start at 0 and have at least two rows"));
    }
    let grid = TimeGrid::new(*times.last().expect("nonempty"), times[1])?;
    if grid.len() != times.len() || times.iter().enumerate().any(|(k, &t)| (t - grid.time(k)).abs() > 1e-9 * grid.horizon()) {
        return Err(mismatch("time column is not a uniform grid"));
    }
    MultiPath::new(grid, comps)
}

/// Long format `member,time,x1,...,xn`, members in index order.
pub fn ensemble_to_csv(e: &Ensemble) -> String {
    let mut out = header("member,time", (1..=e.dim()).map(|i| format!("x{i}")));
    for (j, m) in e.members().iter().enumerate() {
        let cols: Vec<&[f64]> = m.components().iter().map(|c| c.as_slice()).collect();
        write_rows(&mut out, m.grid(), &cols, Some(j as u64));
    }
    out
}

/// `time,x1..xn,l1..lm,tv`: the constrained path, face local times and the
/// running total variation of the pushing term.
pub fn sp_solution_to_csv(sol: &SPSolution) -> String {
    let n = sol.phi.dim();
    let m = sol.face_local_times.len();
    let names = (1..=n).map(|i| format!("x{i}")).chain((1..=m).map(|i| format!("l{i}"))).chain(["tv".to_string()]);
    let mut out = header("time", names);
    let mut cols: Vec<&[f64]> = sol.phi.components().iter().map(|c| c.as_slice()).collect();
    cols.extend(sol.face_local_times.iter().map(|l| l.values()));
    cols.push(sol.tv.values());
    write_rows(&mut out, sol.phi.grid(), &cols, None);
    out
}

pub fn sp_solution_to_json(sol: &SPSolution) -> Result<String> {
    let mut env = PathEnvelope::from_multipath(&sol.phi);
    env.extra = sol
        .face_local_times
        .iter()
        .enumerate()
        .map(|(i, l)| NamedSeries {
            name: format!("l{}", i + 1),
            values: l.values().to_vec(),
        })
        .collect();
    env.extra.push(NamedSeries {
        name: "tv".into(),
        values: sol.tv.values().to_vec(),
    });
    Ok(serde_json::to_string(&env)?)
}

/// `r,tail,bound` per grid point; a missing bound is written as `nan`.
pub fn tail_report_to_csv(rep: &TailReport) -> String {
    let mut out = String::from("r,tail,bound\n");
    for (i, r) in rep.r_grid.iter().enumerate() {
        let b = rep.bound.get(i).copied().unwrap_or(f64::NAN);
        let _ = writeln!(out, "{r},{},{b}", rep.empirical_tail[i]);
    }
    out
}

/// Rows of floats with a header, for ad-hoc tables.
pub fn table_to_csv(headers: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_string(path: &FsPath, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_string(path, &s)
}
