//! Runtime-scaling and gradient-fidelity experiments, their reports and
//! atomic file output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::build_ansatz;
use crate::error::{Error, Result};
use crate::maxcut::random_graph;
use crate::vqe::{gradient_distance, problem_hamiltonian, run_vqe, Backend, ExactBackend, OptimizerConfig};

/// Minimum timed repetitions per benchmark cell.
pub const MIN_REPEATS: usize = 3;

/// Which coordinate a runtime grid varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchAxis {
    Depth,
    Qubits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub axis: BenchAxis,
    /// Grid coordinates along `axis`, strictly increasing.
    pub values: Vec<usize>,
    /// Qubit count when sweeping depth.
    pub num_qubits: usize,
    /// Ansatz depth when sweeping qubits.
    pub depth: usize,
    pub repeats: usize,
    pub graph_seed: u64,
    pub param_seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("benchmark grid is empty".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "grid coordinates must be strictly increasing".into(),
            ));
        }
        if self.repeats < MIN_REPEATS {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_REPEATS} repetitions per cell, got {}",
                self.repeats
            )));
        }
        Ok(())
    }

    /// `(N, D)` of every cell.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .map(|&v| match self.axis {
                BenchAxis::Depth => (self.num_qubits, v),
                BenchAxis::Qubits => (v, self.depth),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub num_qubits: usize,
    pub depth: usize,
    pub median_ms: f64,
    pub samples_ms: Vec<f64>,
}

/// Least-squares fits of median time against the swept coordinate `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `t ≈ intercept + slope·x`.
    pub slope_ms: f64,
    pub intercept_ms: f64,
    pub r_squared: f64,
    /// `k` in `t ∝ x^k`, fitted on logarithms; absent for fewer than two cells.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub cpu: String,
    pub logical_cpus: usize,
    pub worker_threads: usize,
    pub target: String,
    pub debug_assertions: bool,
    pub crate_version: String,
}

impl Fingerprint {
    pub fn capture() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            cpu,
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            worker_threads: rayon::current_num_threads(),
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            debug_assertions: cfg!(debug_assertions),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub backend: String,
    pub rows: Vec<BenchRow>,
    pub fit: Option<ScalingFit>,
    pub fingerprint: Fingerprint,
}

impl BenchReport {
    /// CSV with columns `N,D,median_ms,min_ms,max_ms,repeats`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["N", "D", "median_ms", "min_ms", "max_ms", "repeats"])?;
        for r in &self.rows {
            let min = r.samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w.write_record([
                r.num_qubits.to_string(),
                r.depth.to_string(),
                r.median_ms.to_string(),
                min.to_string(),
                max.to_string(),
                r.samples_ms.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Median of the last row over the first.
    pub fn end_to_end_ratio(&self) -> Option<f64> {
        Some(self.rows.last()?.median_ms / self.rows.first()?.median_ms)
    }

    pub fn medians_nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].median_ms <= w[1].median_ms)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares of `y` on `x`, plus a log-log exponent.
pub fn fit_scaling(x: &[f64], y: &[f64]) -> Option<ScalingFit> {
    let (slope, intercept, r_squared) = linear_fit(x, y)?;
    let logs: Option<(Vec<f64>, Vec<f64>)> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a > 0.0 && b > 0.0).then(|| (a.ln(), b.ln())))
        .collect::<Option<Vec<_>>>()
        .map(|p| p.into_iter().unzip());
    let exponent = logs.and_then(|(lx, ly)| linear_fit(&lx, &ly)).map(|(k, _, _)| k);
    Some(ScalingFit {
        slope_ms: slope,
        intercept_ms: intercept,
        r_squared,
        exponent,
    })
}

fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some((slope, intercept, r_squared))
}

/// Times full optimizer iterations (energy, gradient, update) on each cell.
///
/// Every cell runs `repeats + 1` iterations on a seeded random graph; the
/// first is a warm-up and is not recorded.
pub fn bench_runtime(backend: &dyn Backend, config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.values.len());
    for (n, depth) in config.cells() {
        let graph = random_graph(n, config.graph_seed)?;
        let opt = OptimizerConfig {
            iterations: config.repeats + 1,
            seed: config.param_seed,
            depth,
            ..Default::default()
        };
        let trace = run_vqe(backend, &graph, &opt)?;
        let samples_ms: Vec<f64> = trace.records[1..].iter().map(|r| r.ms).collect();
        rows.push(BenchRow {
            num_qubits: n,
            depth,
            median_ms: median(&samples_ms),
            samples_ms,
        });
    }
    let x: Vec<f64> = config.values.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.median_ms).collect();
    Ok(BenchReport {
        config: config.clone(),
        backend: backend.kind().to_string(),
        rows,
        fit: fit_scaling(&x, &y),
        fingerprint: Fingerprint::capture(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub num_qubits: usize,
    pub depth: usize,
    pub bond_dim: usize,
    pub mean_distance: f64,
}

/// Mean gradient distance of `backend(χ)` to the exact backend on a seeded
/// random graph with `num_nodes` nodes.
pub fn gradcheck_cell(
    backend: &dyn Backend,
    num_nodes: usize,
    depth: usize,
    points: usize,
    graph_seed: u64,
    point_seed: u64,
) -> Result<GradcheckRow> {
    let graph = random_graph(num_nodes, graph_seed)?;
    let ham = problem_hamiltonian(&graph, false);
    let circuit = build_ansatz(ham.num_qubits(), depth)?;
    let d = gradient_distance(backend, &ExactBackend, &circuit, &ham, points, point_seed)?;
    let bond_dim = match backend.kind() {
        crate::vqe::BackendKind::TensorRing { bond_dim } => bond_dim,
        crate::vqe::BackendKind::Exact => 0,
    };
    Ok(GradcheckRow {
        num_qubits: ham.num_qubits(),
        depth,
        bond_dim,
        mean_distance: d.mean,
    })
}

/// CSV with columns `N,D,chi,mean_distance`.
pub fn write_gradcheck_csv<W: Write>(rows: &[GradcheckRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["N", "D", "chi", "mean_distance"])?;
    for r in rows {
        w.write_record([
            r.num_qubits.to_string(),
            r.depth.to_string(),
            r.bond_dim.to_string(),
            r.mean_distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gradcheck_csv<R: std::io::Read>(reader: R) -> Result<Vec<GradcheckRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            line: line + 2,
            message: "malformed gradcheck row".into(),
        };
        let field = |i: usize| rec.get(i).ok_or_else(bad);
        rows.push(GradcheckRow {
            num_qubits: field(0)?.parse().map_err(|_| bad())?,
            depth: field(1)?.parse().map_err(|_| bad())?,
            bond_dim: field(2)?.parse().map_err(|_| bad())?,
            mean_distance: field(3)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
