//! Energy backends, parameter-shift gradients, the gradient-descent training
//! loop and the gradient-distance experiment.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_ansatz, shift_parameter, Circuit};
use crate::error::{Error, Result};
use crate::maxcut::{
    approximation_ratio, brute_force_extremes, hamiltonian_fixing_last_node, hamiltonian_from_graph, IsingHamiltonian,
    WeightedGraph, BRUTE_FORCE_CAP,
};
use crate::statevector::{expectation_exact, simulate_exact};
use crate::tensor_ring::{ContractionMethod, TensorRingState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    TensorRing { bond_dim: usize },
    Exact,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::TensorRing { bond_dim } => write!(f, "tensor-ring(chi={bond_dim})"),
            BackendKind::Exact => f.write_str("exact"),
        }
    }
}

/// Something that maps `(circuit, θ, H)` to the energy `⟨H(θ)⟩`.
///
/// Implementations must be deterministic and reentrant: gradient slots may be
/// evaluated concurrently.
pub trait Backend: Send + Sync {
    fn energy(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<f64>;

    fn kind(&self) -> BackendKind;

    /// Parameter-shift gradient. Overrides may share work between the shifted
    /// circuits but must return the same values as [`parameter_shift_gradient`].
    fn gradient(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<Vec<f64>> {
        shift_rule(circuit, params, |slot, delta| {
            let shifted = shift_parameter(params, slot, delta)?;
            self.energy(circuit, &shifted, ham)
        })
    }
}

/// Dense statevector evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactBackend;

impl Backend for ExactBackend {
    fn energy(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<f64> {
        let state = simulate_exact(circuit, params)?;
        expectation_exact(&state, ham)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Exact
    }
}

/// Tensor-ring evaluation at a fixed bond dimension.
#[derive(Debug, Clone, Copy)]
pub struct TensorRingBackend {
    pub bond_dim: usize,
    pub method: ContractionMethod,
}

impl TensorRingBackend {
    pub fn new(bond_dim: usize) -> Self {
        Self {
            bond_dim,
            method: ContractionMethod::TransferMatrix,
        }
    }

    pub fn with_method(mut self, method: ContractionMethod) -> Self {
        self.method = method;
        self
    }

    /// Final tensor-ring state of `circuit` at `params`.
    pub fn prepare(&self, circuit: &Circuit, params: &[f64]) -> Result<TensorRingState> {
        let mut state = TensorRingState::zero_state(circuit.num_qubits(), self.bond_dim)?;
        for gate in circuit.bind(params)? {
            state.apply_gate_mut(&gate)?;
        }
        Ok(state)
    }
}

impl Backend for TensorRingBackend {
    fn energy(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<f64> {
        self.prepare(circuit, params)?
            .expectation_hamiltonian_with(ham, self.method)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::TensorRing {
            bond_dim: self.bond_dim,
        }
    }

    /// Replays each shifted circuit from a snapshot taken just before the
    /// first gate that reads the shifted slot.
    fn gradient(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<Vec<f64>> {
        check_param_len(circuit, params)?;
        let first_use: Vec<usize> = circuit
            .slot_positions()
            .iter()
            .map(|p| p.iter().copied().min().unwrap_or(0))
            .collect();
        let mut snapshot_at: Vec<usize> = first_use.clone();
        snapshot_at.sort_unstable();
        snapshot_at.dedup();

        let bound = circuit.bind(params)?;
        let mut state = TensorRingState::zero_state(circuit.num_qubits(), self.bond_dim)?;
        let mut snapshots = Vec::with_capacity(snapshot_at.len());
        let mut applied = 0;
        for &pos in &snapshot_at {
            for gate in &bound[applied..pos] {
                state.apply_gate_mut(gate)?;
            }
            applied = pos;
            snapshots.push(state.clone());
        }

        shift_rule(circuit, params, |slot, delta| {
            let start = first_use[slot];
            let idx = snapshot_at
                .binary_search(&start)
                .expect("snapshot recorded for every slot");
            let shifted = shift_parameter(params, slot, delta)?;
            let mut state = snapshots[idx].clone();
            for gate in &circuit.bind(&shifted)?[start..] {
                state.apply_gate_mut(gate)?;
            }
            state.expectation_hamiltonian_with(ham, self.method)
        })
    }
}

/// Wraps a backend and counts energy evaluations.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    pub inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn energy(&self, circuit: &Circuit, params: &[f64], ham: &IsingHamiltonian) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.energy(circuit, params, ham)
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
}

/// `∂⟨H⟩/∂θ_i = ½ [⟨H(θ + π/2 e_i)⟩ - ⟨H(θ - π/2 e_i)⟩]` for every slot,
/// using exactly `2P` backend energy evaluations.
pub fn parameter_shift_gradient(
    backend: &dyn Backend,
    circuit: &Circuit,
    params: &[f64],
    ham: &IsingHamiltonian,
) -> Result<Vec<f64>> {
    shift_rule(circuit, params, |slot, delta| {
        let shifted = shift_parameter(params, slot, delta)?;
        backend.energy(circuit, &shifted, ham)
    })
}

fn check_param_len(circuit: &Circuit, params: &[f64]) -> Result<()> {
    let p = circuit.param_count();
    if params.len() != p {
        return Err(Error::InvalidConfig(format!(
            "circuit has {p} parameters, got a vector of length {}",
            params.len()
        )));
    }
    Ok(())
}

/// Applies the shift rule with `eval(slot, ±π/2)`, slots in parallel.
fn shift_rule<F>(circuit: &Circuit, params: &[f64], eval: F) -> Result<Vec<f64>>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    check_param_len(circuit, params)?;
    (0..circuit.param_count())
        .into_par_iter()
        .map(|slot| {
            let wrap = |e: Error| Error::Backend {
                slot,
                source: Box::new(e),
            };
            let plus = eval(slot, FRAC_PI_2).map_err(wrap)?;
            let minus = eval(slot, -FRAC_PI_2).map_err(wrap)?;
            Ok(0.5 * (plus - minus))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Each angle uniform in `[0, 2π)` from the run seed.
    #[default]
    Uniform,
    Zeros,
}

/// Initial parameter vector for a run.
pub fn initial_params(strategy: InitStrategy, count: usize, seed: u64) -> Vec<f64> {
    match strategy {
        InitStrategy::Zeros => vec![0.0; count],
        InitStrategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| rng.random_range(0.0..TAU)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Number of variational blocks in the ansatz.
    pub depth: usize,
    /// Pin the last node to one side of the cut, using `K - 1` qubits.
    pub fix_node: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 0.05,
            seed: 0,
            init: InitStrategy::Uniform,
            depth: 1,
            fix_node: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.depth < 1 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub approx_ratio: Option<f64>,
    pub grad_norm: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub backend: BackendKind,
    pub num_qubits: usize,
    /// `(M, m)` when the instance was small enough to enumerate.
    pub extremes: Option<(f64, f64)>,
    pub records: Vec<IterationRecord>,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
}

impl TrainTrace {
    pub fn best_ratio(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.approx_ratio).reduce(f64::max)
    }

    pub fn best_energy(&self) -> Option<f64> {
        self.records.iter().map(|r| r.energy).reduce(f64::min)
    }

    pub fn final_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy)
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.ms).sum::<f64>() / 1000.0
    }

    /// CSV with columns `iter,energy,approx_ratio,grad_norm,ms`; the ratio is
    /// empty when it was not computed.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "energy", "approx_ratio", "grad_norm", "ms"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.energy.to_string(),
                r.approx_ratio.map(|a| a.to_string()).unwrap_or_default(),
                r.grad_norm.to_string(),
                r.ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv_records<R: std::io::Read>(reader: R) -> Result<Vec<IterationRecord>> {
        let mut r = csv::Reader::from_reader(reader);
        let mut out = Vec::new();
        for (line, row) in r.records().enumerate() {
            let row = row?;
            let bad = |what: &str| Error::Parse {
                line: line + 2,
                message: format!("bad {what}"),
            };
            let num = |i: usize, what: &str| -> Result<f64> {
                row.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(what))
            };
            out.push(IterationRecord {
                iter: row.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("iter"))?,
                energy: num(1, "energy")?,
                approx_ratio: match row.get(2) {
                    Some("") | None => None,
                    Some(s) => Some(s.parse().map_err(|_| bad("approx_ratio"))?),
                },
                grad_norm: num(3, "grad_norm")?,
                ms: num(4, "ms")?,
            });
        }
        Ok(out)
    }

    /// Trace with timing fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.records {
            r.ms = 0.0;
        }
        t
    }
}

/// The Hamiltonian a run optimizes for `graph`.
pub fn problem_hamiltonian(graph: &WeightedGraph, fix_node: bool) -> IsingHamiltonian {
    if fix_node {
        hamiltonian_fixing_last_node(graph)
    } else {
        hamiltonian_from_graph(graph)
    }
}

/// Plain gradient descent on the layered ring ansatz.
///
/// Each iteration evaluates the energy at the current parameters, then the
/// parameter-shift gradient, then steps `θ ← θ - lr·∇`.
pub fn run_vqe(backend: &dyn Backend, graph: &WeightedGraph, config: &OptimizerConfig) -> Result<TrainTrace> {
    config.validate()?;
    let ham = problem_hamiltonian(graph, config.fix_node);
    let circuit = build_ansatz(ham.num_qubits(), config.depth)?;
    let extremes = if ham.num_qubits() <= BRUTE_FORCE_CAP {
        let e = brute_force_extremes(&ham)?;
        (e.max > e.min).then_some((e.max, e.min))
    } else {
        None
    };
    let initial = initial_params(config.init, circuit.param_count(), config.seed);
    let mut params = initial.clone();
    let mut trace = TrainTrace {
        backend: backend.kind(),
        num_qubits: ham.num_qubits(),
        extremes,
        records: Vec::with_capacity(config.iterations),
        initial_params: initial,
        final_params: Vec::new(),
    };
    for iter in 1..=config.iterations {
        let start = Instant::now();
        let energy = backend.energy(&circuit, &params, &ham)?;
        let grad = backend.gradient(&circuit, &params, &ham)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let diverged = if !energy.is_finite() {
            Some("energy")
        } else if !grad_norm.is_finite() {
            Some("gradient")
        } else {
            None
        };
        if let Some(quantity) = diverged {
            trace.final_params = params;
            return Err(Error::NonFinite {
                quantity,
                iteration: iter,
                trace: Box::new(trace),
            });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        let ms = start.elapsed().as_secs_f64() * 1000.0;
        let approx_ratio = match extremes {
            Some((max, min)) => Some(approximation_ratio(energy, max, min)?),
            None => None,
        };
        trace.records.push(IterationRecord {
            iter,
            energy,
            approx_ratio,
            grad_norm,
            ms,
        });
    }
    trace.final_params = params;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientDistance {
    pub mean: f64,
    pub per_point: Vec<f64>,
}

/// Mean `‖g_A(θ) - g_B(θ)‖₂` over `num_points` parameter vectors drawn
/// uniformly from `[0, 2π)^P`.
pub fn gradient_distance(
    a: &dyn Backend,
    b: &dyn Backend,
    circuit: &Circuit,
    ham: &IsingHamiltonian,
    num_points: usize,
    seed: u64,
) -> Result<GradientDistance> {
    if num_points == 0 {
        return Err(Error::InvalidConfig("need at least one sample point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..num_points)
        .map(|_| (0..circuit.param_count()).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let per_point = points
        .iter()
        .map(|theta| {
            let ga = a.gradient(circuit, theta, ham)?;
            let gb = b.gradient(circuit, theta, ham)?;
            Ok(ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_point.iter().sum::<f64>() / num_points as f64;
    Ok(GradientDistance { mean, per_point })
}
