//! Tensor-ring state representation of an N-qubit register.
//!
//! Site `n` holds an order-3 tensor `τ(n)` with a left bond, a right bond and
//! a physical index of size 2. Bonds close circularly: the right bond of the
//! last site is the left bond of site 0. Every bond has the same dimension
//! `χ`, and two-qubit gates keep it fixed by truncating the SVD of the merged
//! pair tensor to the `χ` largest singular values.
//!
//! ```text
//!    ┌──────────────────────────────────────────┐
//!    └─ τ(0) ── τ(1) ── τ(2) ── ... ── τ(N-1) ──┘
//!        │       │       │               │
//!        i0      i1      i2             iN-1
//! ```
//!
//! Amplitudes are `⟨i0 i1 … iN-1|ψ⟩ = Tr(τ(0)^{i0} τ(1)^{i1} ⋯ τ(N-1)^{iN-1})`
//! with qubit 0 as the most significant bit of the basis index.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::circuit::{swap_matrix, unitarity_deviation, BoundGate};
use crate::error::{Error, Result};
use crate::maxcut::IsingHamiltonian;

/// Largest register `to_statevector` will expand by default.
pub const DEFAULT_STATEVECTOR_CAP: usize = 20;

/// Default tolerance on `|U U† - I|` when gates are checked.
/// Singular values below this fraction of the largest are treated as zero.
pub const NULL_SINGULAR_VALUE: f64 = 1e-13;

pub const DEFAULT_UNITARITY_TOLERANCE: f64 = 1e-12;

/// One ring site: two `χ×χ` row-major matrices, one per physical value.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    bond_dim: usize,
    data: Vec<C64>,
}

impl SiteTensor {
    pub fn zeros(bond_dim: usize) -> Self {
        Self {
            bond_dim,
            data: vec![C64::ZERO; 2 * bond_dim * bond_dim],
        }
    }

    /// Builds a site from entries laid out as `[physical][left][right]`.
    pub fn from_matrices(bond_dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != 2 * bond_dim * bond_dim {
            return Err(Error::InvalidDimension(format!(
                "site tensor needs {} entries for bond dimension {bond_dim}, got {}",
                2 * bond_dim * bond_dim,
                data.len()
            )));
        }
        Ok(Self { bond_dim, data })
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    /// `(left, right, physical)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bond_dim, self.bond_dim, 2)
    }

    pub fn get(&self, left: usize, right: usize, phys: usize) -> C64 {
        let chi = self.bond_dim;
        self.data[(phys * chi + left) * chi + right]
    }

    pub fn set(&mut self, left: usize, right: usize, phys: usize, value: C64) {
        let chi = self.bond_dim;
        self.data[(phys * chi + left) * chi + right] = value;
    }

    /// Real parts of both physical slices when every entry is real.
    fn real_matrices(&self) -> Option<[Vec<f64>; 2]> {
        if self.data.iter().any(|z| z.im != 0.0) {
            return None;
        }
        Some([0, 1].map(|i| self.matrix(i).iter().map(|z| z.re).collect()))
    }

    /// The `χ×χ` matrix selected by a physical index.
    pub fn matrix(&self, phys: usize) -> &[C64] {
        let len = self.bond_dim * self.bond_dim;
        &self.data[phys * len..(phys + 1) * len]
    }
}

/// Two-qubit gate reshaped as `U[i'_m, i'_n, i_m, i_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTensor2Q {
    matrix: Matrix4<C64>,
}

impl GateTensor2Q {
    /// Wraps a 4×4 unitary whose row index is `i'_m·2 + i'_n` and column
    /// index `i_m·2 + i_n`. Rejects matrices farther than `1e-12` from unitary.
    pub fn new(matrix: Matrix4<C64>) -> Result<Self> {
        Self::with_tolerance(matrix, Some(DEFAULT_UNITARITY_TOLERANCE))
    }

    pub fn with_tolerance(matrix: Matrix4<C64>, tolerance: Option<f64>) -> Result<Self> {
        if let Some(tol) = tolerance {
            let deviation = unitarity_deviation(&matrix);
            if deviation > tol {
                return Err(Error::NonUnitary { deviation });
            }
        }
        Ok(Self { matrix })
    }

    pub fn entry(&self, out_m: usize, out_n: usize, in_m: usize, in_n: usize) -> C64 {
        self.matrix[(out_m * 2 + out_n, in_m * 2 + in_n)]
    }

    pub fn as_matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    fn real_matrix(&self) -> Option<Matrix4<f64>> {
        self.matrix
            .iter()
            .all(|z| z.im == 0.0)
            .then(|| self.matrix.map(|z| z.re))
    }

    /// The same operator with the roles of the two qubits exchanged.
    pub fn swapped(&self) -> Self {
        let s = swap_matrix();
        Self {
            matrix: s * self.matrix * s,
        }
    }
}

/// How expectation values are contracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionMethod {
    /// Per-site `χ²×χ²` transfer matrices multiplied around the ring.
    TransferMatrix,
    /// Expand all `2^N` amplitudes by ring traces, then sum diagonally.
    Amplitudes,
    /// Whichever of the two has the lower estimated operation count.
    #[default]
    Auto,
}

/// A tensor-ring state with a uniform bond dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRingState {
    num_qubits: usize,
    bond_dim: usize,
    sites: Vec<SiteTensor>,
    unitarity_tolerance: Option<f64>,
}

impl TensorRingState {
    /// `|0…0⟩`: every site has a single unit entry at `(0, 0, 0)`.
    pub fn zero_state(num_qubits: usize, bond_dim: usize) -> Result<Self> {
        if num_qubits < 2 {
            return Err(Error::InvalidDimension(format!(
                "tensor ring needs at least 2 qubits, got {num_qubits}"
            )));
        }
        if bond_dim < 1 {
            return Err(Error::InvalidDimension("bond dimension must be at least 1".into()));
        }
        let mut site = SiteTensor::zeros(bond_dim);
        site.set(0, 0, 0, C64::ONE);
        Ok(Self {
            num_qubits,
            bond_dim,
            sites: vec![site; num_qubits],
            unitarity_tolerance: Some(DEFAULT_UNITARITY_TOLERANCE),
        })
    }

    pub fn from_sites(sites: Vec<SiteTensor>) -> Result<Self> {
        let num_qubits = sites.len();
        if num_qubits < 2 {
            return Err(Error::InvalidDimension(format!(
                "tensor ring needs at least 2 qubits, got {num_qubits}"
            )));
        }
        let bond_dim = sites[0].bond_dim;
        if bond_dim < 1 || sites.iter().any(|s| s.bond_dim != bond_dim) {
            return Err(Error::InvalidDimension(
                "all sites must share one bond dimension".into(),
            ));
        }
        Ok(Self {
            num_qubits,
            bond_dim,
            sites,
            unitarity_tolerance: Some(DEFAULT_UNITARITY_TOLERANCE),
        })
    }

    /// Sets how strictly single-qubit gates are checked; `None` disables the check.
    pub fn with_unitarity_tolerance(mut self, tolerance: Option<f64>) -> Self {
        self.unitarity_tolerance = tolerance;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn site_mut(&mut self, n: usize) -> &mut SiteTensor {
        &mut self.sites[n]
    }

    fn check_site(&self, n: usize) -> Result<()> {
        if n >= self.num_qubits {
            return Err(Error::IndexOutOfRange {
                index: n,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    /// Returns a new state with `gate` contracted into the physical leg of site `n`.
    pub fn apply_single_qubit(&self, n: usize, gate: &Matrix2<C64>) -> Result<Self> {
        let mut out = self.clone();
        out.apply_single_qubit_mut(n, gate)?;
        Ok(out)
    }

    pub fn apply_single_qubit_mut(&mut self, n: usize, gate: &Matrix2<C64>) -> Result<()> {
        self.check_site(n)?;
        if let Some(tol) = self.unitarity_tolerance {
            let deviation = unitarity_deviation(gate);
            if deviation > tol {
                return Err(Error::NonUnitary { deviation });
            }
        }
        let chi2 = self.bond_dim * self.bond_dim;
        let site = &mut self.sites[n];
        let (u00, u01, u10, u11) = (gate[(0, 0)], gate[(0, 1)], gate[(1, 0)], gate[(1, 1)]);
        let (zero, one) = site.data.split_at_mut(chi2);
        for (a, b) in zero.iter_mut().zip(one.iter_mut()) {
            let (x0, x1) = (*a, *b);
            *a = u00 * x0 + u01 * x1;
            *b = u10 * x0 + u11 * x1;
        }
        Ok(())
    }

    /// Applies a two-qubit gate to ring-adjacent sites `m` and `m + 1 (mod N)`,
    /// truncating the shared bond back to `χ`.
    pub fn apply_two_qubit_adjacent(&self, m: usize, gate: &GateTensor2Q) -> Result<Self> {
        let mut out = self.clone();
        out.apply_two_qubit_adjacent_mut(m, gate)?;
        Ok(out)
    }

    /// In-place form of [`apply_two_qubit_adjacent`](Self::apply_two_qubit_adjacent).
    /// Returns the discarded weight, the sum of squared dropped singular values.
    pub fn apply_two_qubit_adjacent_mut(&mut self, m: usize, gate: &GateTensor2Q) -> Result<f64> {
        self.check_site(m)?;
        let n = (m + 1) % self.num_qubits;
        let chi = self.bond_dim;

        if let (Some(u), Some(a), Some(b)) = (
            gate.real_matrix(),
            self.sites[m].real_matrices(),
            self.sites[n].real_matrices(),
        ) {
            let theta = build_theta(&u, &a, &b, chi);
            let f = real_svd(theta.as_ref())?;
            let lift = |v: f64| C64::new(v, 0.0);
            return Ok(self.store_factors(m, n, &f, lift));
        }

        let u = Matrix4::from_fn(|i, j| gate.matrix[(i, j)]);
        let a = [0, 1].map(|i| self.sites[m].matrix(i).to_vec());
        let b = [0, 1].map(|i| self.sites[n].matrix(i).to_vec());
        let theta = build_theta(&u, &a, &b, chi);
        let f = svd(&theta)?;
        Ok(self.store_factors(m, n, &f, |v| v))
    }

    /// `τ'(m) = X S'` and `τ'(n) = Y`, keeping the χ largest singular values.
    /// Returns the discarded weight `Σ_{k≥χ} s_k²`.
    fn store_factors<T: Copy>(&mut self, m: usize, n: usize, f: &Factors<T>, lift: impl Fn(T) -> C64) -> f64 {
        let chi = self.bond_dim;
        let discarded = f.sv.iter().skip(chi).map(|s| s * s).sum();
        // singular vectors of numerically zero singular values are arbitrary;
        // drop them so they cannot leak into later merges
        let floor = NULL_SINGULAR_VALUE * f.sv[0];
        let kept = f.sv.iter().take(chi).take_while(|&&s| s > floor).count();

        let left = &mut self.sites[m];
        for a in 0..2 {
            for l in 0..chi {
                for k in 0..chi {
                    let v = if k < kept {
                        lift(f.x[(a * chi + l, k)]) * f.sv[k]
                    } else {
                        C64::ZERO
                    };
                    left.set(l, k, a, v);
                }
            }
        }
        let right = &mut self.sites[n];
        for b in 0..2 {
            for k in 0..chi {
                for r in 0..chi {
                    let v = if k < kept {
                        lift(f.y[(k, b * chi + r)])
                    } else {
                        C64::ZERO
                    };
                    right.set(k, r, b, v);
                }
            }
        }
        discarded
    }

    /// Applies a two-qubit matrix with `first` as the more significant qubit.
    /// The pair must be ring-adjacent in either orientation.
    pub fn apply_two_qubit_mut(&mut self, first: usize, second: usize, gate: &GateTensor2Q) -> Result<f64> {
        self.check_site(first)?;
        self.check_site(second)?;
        if first == second {
            return Err(Error::RepeatedQubit(first));
        }
        let n = self.num_qubits;
        if (first + 1) % n == second {
            self.apply_two_qubit_adjacent_mut(first, gate)
        } else if (second + 1) % n == first {
            self.apply_two_qubit_adjacent_mut(second, &gate.swapped())
        } else {
            Err(Error::RoutingRequired(first, second))
        }
    }

    /// Applies a bound gate in place.
    pub fn apply_gate_mut(&mut self, gate: &BoundGate) -> Result<()> {
        match gate {
            BoundGate::Single { qubit, matrix } => self.apply_single_qubit_mut(*qubit, matrix),
            BoundGate::Two { first, second, matrix } => {
                let tensor = GateTensor2Q::with_tolerance(*matrix, self.unitarity_tolerance)?;
                self.apply_two_qubit_mut(*first, *second, &tensor).map(|_| ())
            }
        }
    }

    /// `⟨ψ|ψ⟩` by the transfer-matrix ring trace.
    pub fn norm_squared(&self) -> f64 {
        let env = RingEnvironments::new(self, 0);
        env.right[0].trace().re.max(0.0)
    }

    /// `⟨ψ|Z_p Z_q|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation_zz(&self, p: usize, q: usize) -> Result<f64> {
        self.check_site(p)?;
        self.check_site(q)?;
        if p == q {
            return Err(Error::RepeatedQubit(p));
        }
        let (lo, hi) = (p.min(q), p.max(q));
        let env = RingEnvironments::new(self, lo);
        let norm = env.right[0].trace().re;
        if norm <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut probe = env.left[lo].push_left(&self.sites[lo], Z_SIGNS);
        for k in lo + 1..hi {
            probe = probe.push_left(&self.sites[k], ID_SIGNS);
        }
        let w = env.right[hi + 1].push_right(&self.sites[hi], Z_SIGNS);
        Ok(probe.dot(&w).re / norm)
    }

    /// `⟨ψ|Z_p|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation_z(&self, p: usize) -> Result<f64> {
        self.check_site(p)?;
        let env = RingEnvironments::new(self, p);
        let norm = env.right[0].trace().re;
        if norm <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let w = env.right[p + 1].push_right(&self.sites[p], Z_SIGNS);
        Ok(env.left[p].dot(&w).re / norm)
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` contracted with the chosen method.
    pub fn expectation_hamiltonian_with(&self, ham: &IsingHamiltonian, method: ContractionMethod) -> Result<f64> {
        if ham.num_qubits() != self.num_qubits {
            return Err(Error::InvalidDimension(format!(
                "Hamiltonian acts on {} qubits, state has {}",
                ham.num_qubits(),
                self.num_qubits
            )));
        }
        let method = match method {
            ContractionMethod::Auto => self.cheaper_method(ham),
            m => m,
        };
        match method {
            ContractionMethod::Amplitudes => {
                let amps = self.to_statevector_capped(usize::MAX)?;
                let probs: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
                let norm: f64 = probs.iter().sum();
                if norm <= 0.0 {
                    return Err(Error::ZeroNorm);
                }
                Ok(ham.diagonal_expectation(&probs) / norm)
            }
            _ => self.transfer_matrix_energy(ham),
        }
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` by transfer matrices around the ring.
    pub fn expectation_hamiltonian(&self, ham: &IsingHamiltonian) -> Result<f64> {
        self.expectation_hamiltonian_with(ham, ContractionMethod::TransferMatrix)
    }

    fn cheaper_method(&self, ham: &IsingHamiltonian) -> ContractionMethod {
        let n = self.num_qubits as f64;
        let chi = self.bond_dim as f64;
        // Memory for the amplitude route is 2^N·χ; keep it bounded.
        if self.num_qubits > DEFAULT_STATEVECTOR_CAP {
            return ContractionMethod::TransferMatrix;
        }
        let amplitude_cost = 2f64.powf(n + 1.0) * chi.powi(3) + 2f64.powf(n) * ham.len() as f64;
        let transfer_cost = (3.0 * n + ham.len() as f64 * n / 2.0) * 4.0 * chi.powi(5);
        if amplitude_cost < transfer_cost {
            ContractionMethod::Amplitudes
        } else {
            ContractionMethod::TransferMatrix
        }
    }

    fn transfer_matrix_energy(&self, ham: &IsingHamiltonian) -> Result<f64> {
        let n = self.num_qubits;
        for &(i, j, _) in ham.couplings() {
            self.check_site(i)?;
            self.check_site(j)?;
            if i == j {
                return Err(Error::RepeatedQubit(i));
            }
        }
        for &(i, _) in ham.fields() {
            self.check_site(i)?;
        }
        if ham.is_empty() {
            return Ok(0.0);
        }
        let last_probe = ham
            .couplings()
            .iter()
            .map(|&(i, j, _)| i.min(j))
            .chain(ham.fields().iter().map(|&(i, _)| i))
            .max()
            .unwrap_or(0);
        let env = RingEnvironments::new(self, last_probe);
        let norm = env.right[0].trace().re;
        if norm <= 0.0 {
            return Err(Error::ZeroNorm);
        }

        // W_q = F_q R_{q+1}: right environment with Z absorbed at q
        let mut with_z: Vec<Option<Environment>> = vec![None; n];
        let need = |q: usize, with_z: &mut Vec<Option<Environment>>| {
            if with_z[q].is_none() {
                with_z[q] = Some(env.right[q + 1].push_right(&self.sites[q], Z_SIGNS));
            }
        };

        let mut total = 0.0;
        for &(i, w) in ham.fields() {
            need(i, &mut with_z);
            total += w * env.left[i].dot(with_z[i].as_ref().unwrap()).re;
        }

        // group couplings by their lower site, then sweep rightwards once per group
        let mut by_low: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in ham.couplings() {
            by_low[i.min(j)].push((i.max(j), w));
        }
        for (p, partners) in by_low.iter_mut().enumerate() {
            if partners.is_empty() {
                continue;
            }
            partners.sort_by_key(|&(q, _)| q);
            let last = partners.last().unwrap().0;
            let mut probe = env.left[p].push_left(&self.sites[p], Z_SIGNS);
            let mut next = 0;
            for k in p + 1..=last {
                while next < partners.len() && partners[next].0 == k {
                    need(k, &mut with_z);
                    total += partners[next].1 * probe.dot(with_z[k].as_ref().unwrap()).re;
                    next += 1;
                }
                if k < last {
                    probe = probe.push_left(&self.sites[k], ID_SIGNS);
                }
            }
        }
        Ok(total / norm)
    }

    /// Dense amplitudes, qubit 0 most significant; capped at
    /// [`DEFAULT_STATEVECTOR_CAP`] qubits.
    pub fn to_statevector(&self) -> Result<Vec<C64>> {
        self.to_statevector_capped(DEFAULT_STATEVECTOR_CAP)
    }

    pub fn to_statevector_capped(&self, cap: usize) -> Result<Vec<C64>> {
        let n = self.num_qubits;
        if n > cap {
            return Err(Error::SizeCap {
                what: "statevector expansion",
                cap,
                got: n,
            });
        }
        let chi = self.bond_dim;
        let dim = 1usize << n;
        let mut amps = vec![C64::ZERO; dim];
        let mut cur = vec![C64::ZERO; dim / 2 * chi];
        let mut nxt = vec![C64::ZERO; dim / 2 * chi];
        // Fix the closing bond index, then grow row vectors site by site.
        for close in 0..chi {
            let mut rows = 2;
            for i in 0..2 {
                let m = self.sites[0].matrix(i);
                cur[i * chi..(i + 1) * chi].copy_from_slice(&m[close * chi..(close + 1) * chi]);
            }
            for site in &self.sites[1..n - 1] {
                let out = &mut nxt[..rows * 2 * chi];
                out.fill(C64::ZERO);
                for s in 0..rows {
                    let v = &cur[s * chi..(s + 1) * chi];
                    for i in 0..2 {
                        let dst = &mut out[(s * 2 + i) * chi..(s * 2 + i + 1) * chi];
                        vecmat_acc(v, site.matrix(i), dst, chi);
                    }
                }
                std::mem::swap(&mut cur, &mut nxt);
                rows *= 2;
            }
            let last = &self.sites[n - 1];
            for s in 0..rows {
                let v = &cur[s * chi..(s + 1) * chi];
                for i in 0..2 {
                    let m = last.matrix(i);
                    let mut acc = C64::ZERO;
                    for b in 0..chi {
                        acc += v[b] * m[b * chi + close];
                    }
                    amps[s * 2 + i] += acc;
                }
            }
        }
        Ok(amps)
    }

    /// JSON-serializable snapshot; see [`StateDump`].
    pub fn dump(&self) -> StateDump {
        let chi = self.bond_dim;
        let tensors = self
            .sites
            .iter()
            .map(|site| {
                let mut flat = Vec::with_capacity(2 * chi * chi);
                for l in 0..chi {
                    for r in 0..chi {
                        for i in 0..2 {
                            let v = site.get(l, r, i);
                            flat.push([v.re, v.im]);
                        }
                    }
                }
                flat
            })
            .collect();
        StateDump {
            num_qubits: self.num_qubits,
            bond_dim: chi,
            shape: [chi, chi, 2],
            tensors,
        }
    }

    pub fn from_dump(dump: &StateDump) -> Result<Self> {
        let chi = dump.bond_dim;
        if dump.shape != [chi, chi, 2] || dump.tensors.len() != dump.num_qubits {
            return Err(Error::InvalidDimension("state dump shape mismatch".into()));
        }
        let sites = dump
            .tensors
            .iter()
            .map(|flat| {
                if flat.len() != 2 * chi * chi {
                    return Err(Error::InvalidDimension("state dump tensor length mismatch".into()));
                }
                let mut site = SiteTensor::zeros(chi);
                for (idx, v) in flat.iter().enumerate() {
                    let (l, r, i) = (idx / (2 * chi), (idx / 2) % chi, idx % 2);
                    site.set(l, r, i, C64::new(v[0], v[1]));
                }
                Ok(site)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_sites(sites)
    }
}

/// Debug dump of a state. `tensors[n]` is site `n` flattened row-major over
/// `(left, right, physical)`, each entry a `[re, im]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub num_qubits: usize,
    pub bond_dim: usize,
    pub shape: [usize; 3],
    pub tensors: Vec<Vec<[f64; 2]>>,
}

const ID_SIGNS: [f64; 2] = [1.0, 1.0];
const Z_SIGNS: [f64; 2] = [1.0, -1.0];

/// `Θ = X diag(s) Y` with singular values in decreasing order. A real `Θ`
/// is decomposed in real arithmetic so real states stay real.
/// `theta[(a, l), (b, r)] = Σ U[a b, im in] (A^{im} B^{in})[l][r]` for site
/// slices `a`, `b` stored row-major.
fn build_theta<T: Scalar>(u: &Matrix4<T>, a: &[Vec<T>; 2], b: &[Vec<T>; 2], chi: usize) -> Mat<T> {
    let chi2 = chi * chi;
    let mut merged = vec![T::ZERO; 4 * chi2];
    for im in 0..2 {
        for i_n in 0..2 {
            let dst = &mut merged[(im * 2 + i_n) * chi2..(im * 2 + i_n + 1) * chi2];
            for l in 0..chi {
                for k in 0..chi {
                    let c = a[im][l * chi + k];
                    for (d, &x) in dst[l * chi..(l + 1) * chi]
                        .iter_mut()
                        .zip(&b[i_n][k * chi..(k + 1) * chi])
                    {
                        *d += c * x;
                    }
                }
            }
        }
    }
    let mut theta = Mat::<T>::zeros(2 * chi, 2 * chi);
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..4 {
                let w = u[(a * 2 + b, k)];
                if w == T::ZERO {
                    continue;
                }
                let block = &merged[k * chi2..(k + 1) * chi2];
                for l in 0..chi {
                    for r in 0..chi {
                        theta[(a * chi + l, b * chi + r)] += w * block[l * chi + r];
                    }
                }
            }
        }
    }
    theta
}

/// `theta = X diag(sv) Y` with `sv` descending.
struct Factors<T> {
    x: Mat<T>,
    y: Mat<T>,
    sv: Vec<f64>,
}

fn real_svd(theta: MatRef<'_, f64>) -> Result<Factors<f64>> {
    let size = theta.nrows();
    if let Some(f) = nalgebra_svd_checked(theta) {
        return Ok(f);
    }
    // The Jacobi sweeps occasionally stall on very sparse inputs; the
    // transpose converges on the same data.
    if let Ok(d) = theta.svd() {
        let y = d.V().transpose().to_owned();
        return Ok(Factors {
            x: d.U().to_owned(),
            y,
            sv: d.S().column_vector().iter().copied().collect(),
        });
    }
    let d = theta.transpose().svd().map_err(|_| Error::SvdFailed { size })?;
    let y = d.U().transpose().to_owned();
    Ok(Factors {
        x: d.V().to_owned(),
        y,
        sv: d.S().column_vector().iter().copied().collect(),
    })
}

/// nalgebra's real SVD is faster than faer's at these sizes but less robust,
/// so its output is only used when it reconstructs `theta` with orthonormal
/// factors.
fn nalgebra_svd_checked(theta: MatRef<'_, f64>) -> Option<Factors<f64>> {
    let size = theta.nrows();
    let real = DMatrix::from_fn(size, size, |i, j| theta[(i, j)]);
    let d = real.clone().try_svd(true, true, f64::EPSILON, 0)?;
    let (u, v_t) = (d.u?, d.v_t?);
    let s = &d.singular_values;
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let tol = 1e-12 * size as f64;
    let rebuilt = &u * DMatrix::from_diagonal(s) * &v_t;
    let ortho = |m: &DMatrix<f64>| (m.transpose() * m - DMatrix::identity(size, size)).amax();
    let scale = s[order[0]].max(f64::MIN_POSITIVE);
    if (rebuilt - &real).amax() > tol * scale || ortho(&u) > tol || ortho(&v_t.transpose()) > tol {
        return None;
    }
    Some(Factors {
        x: Mat::from_fn(size, size, |i, j| u[(i, order[j])]),
        y: Mat::from_fn(size, size, |i, j| v_t[(order[i], j)]),
        sv: order.iter().map(|&k| s[k]).collect(),
    })
}

fn svd(theta: &Mat<C64>) -> Result<Factors<C64>> {
    let size = theta.nrows();
    if theta.col_iter().all(|c| c.iter().all(|z| z.im == 0.0)) {
        let real = Mat::<f64>::from_fn(size, theta.ncols(), |i, j| theta[(i, j)].re);
        let f = real_svd(real.as_ref())?;
        let lift = |m: &Mat<f64>| Mat::from_fn(size, size, |i, j| C64::new(m[(i, j)], 0.0));
        return Ok(Factors {
            x: lift(&f.x),
            y: lift(&f.y),
            sv: f.sv,
        });
    }
    if let Ok(d) = theta.svd() {
        let y = d.V().adjoint().to_owned();
        return Ok(Factors {
            x: d.U().to_owned(),
            y,
            sv: d.S().column_vector().iter().map(|s| s.re).collect(),
        });
    }
    // theta^T = U S V^H gives theta = conj(V) S U^T.
    let d = theta.transpose().svd().map_err(|_| Error::SvdFailed { size })?;
    let x = d.V().conjugate().to_owned();
    let y = d.U().transpose().to_owned();
    Ok(Factors {
        x,
        y,
        sv: d.S().column_vector().iter().map(|s| s.re).collect(),
    })
}

/// Element type of environment arithmetic. Real states (every gate so far
/// real) are contracted in `f64`, which is about four times cheaper.
trait Scalar:
    faer::traits::ComplexField
    + faer::traits::Conjugate<Canonical = Self>
    + Copy
    + std::ops::AddAssign
    + std::ops::Mul<Output = Self>
    + std::iter::Sum
    + PartialEq
    + std::fmt::Debug
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_sign(sign: f64) -> Self;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_sign(sign: f64) -> Self {
        sign
    }
}

impl Scalar for C64 {
    const ZERO: Self = C64::ZERO;
    const ONE: Self = C64::ONE;
    fn from_sign(sign: f64) -> Self {
        C64::new(sign, 0.0)
    }
}

#[derive(Debug, Clone)]
enum EnvData {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

/// `χ` matrices of size `χ×χ`, one per boundary pair `(a, a')` of the cut
/// before site 0, stored contiguously. Viewed as a `χ²×χ²` matrix it is a
/// partial product of transfer matrices `E_n = Σ_i s_i τ(n)^i ⊗ conj(τ(n)^i)`.
#[derive(Debug, Clone)]
struct Environment {
    chi: usize,
    data: EnvData,
}

impl Environment {
    fn identity(chi: usize) -> Self {
        let chi2 = chi * chi;
        let mut data = vec![0.0; chi2 * chi2];
        for a in 0..chi {
            for ap in 0..chi {
                data[(a * chi + ap) * chi2 + a * chi + ap] = 1.0;
            }
        }
        Self {
            chi,
            data: EnvData::Real(data),
        }
    }

    fn complex_data(&self) -> std::borrow::Cow<'_, [C64]> {
        match &self.data {
            EnvData::Complex(v) => std::borrow::Cow::Borrowed(v.as_slice()),
            EnvData::Real(v) => std::borrow::Cow::Owned(v.iter().map(|&x| C64::new(x, 0.0)).collect()),
        }
    }

    /// Multiplies a left environment by the transfer matrix of `site` on the
    /// right: each block becomes `Σ_i s_i (τ^i)ᵀ V conj(τ^i)`.
    fn push_left(&self, site: &SiteTensor, signs: [f64; 2]) -> Self {
        self.push(site, signs, Side::Left)
    }

    /// Multiplies a right environment by the transfer matrix of `site` on the
    /// left: each block becomes `Σ_i s_i τ^i R (τ^i)†`.
    fn push_right(&self, site: &SiteTensor, signs: [f64; 2]) -> Self {
        self.push(site, signs, Side::Right)
    }

    fn push(&self, site: &SiteTensor, signs: [f64; 2], side: Side) -> Self {
        let chi = self.chi;
        let data = match (&self.data, site.real_matrices()) {
            (EnvData::Real(v), Some(mats)) => EnvData::Real(push_blocks(v, [&mats[0], &mats[1]], signs, side, chi)),
            _ => EnvData::Complex(push_blocks(
                &self.complex_data(),
                [site.matrix(0), site.matrix(1)],
                signs,
                side,
                chi,
            )),
        };
        Self { chi, data }
    }

    /// `Tr(L · R)` for a left environment `self` and right environment `other`.
    fn dot(&self, other: &Environment) -> C64 {
        match (&self.data, &other.data) {
            (EnvData::Real(x), EnvData::Real(y)) => C64::new(x.iter().zip(y).map(|(a, b)| a * b).sum(), 0.0),
            _ => self
                .complex_data()
                .iter()
                .zip(other.complex_data().iter())
                .map(|(x, y)| *x * *y)
                .sum(),
        }
    }

    /// Trace of the `χ²×χ²` matrix.
    fn trace(&self) -> C64 {
        let chi2 = self.chi * self.chi;
        match &self.data {
            EnvData::Real(v) => C64::new((0..chi2).map(|u| v[u * chi2 + u]).sum(), 0.0),
            EnvData::Complex(v) => (0..chi2).map(|u| v[u * chi2 + u]).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Left,
    Right,
}

/// One transfer-matrix push on raw environment data.
fn push_blocks<T: Scalar>(data: &[T], mats: [&[T]; 2], signs: [f64; 2], side: Side, chi: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; chi.pow(4)];
    let mut tmp = vec![T::ZERO; chi.pow(4)];
    let mut scratch = Scratch::new(chi);
    for (mat, &sign) in mats.iter().zip(&signs) {
        let a = MatRef::from_row_major_slice(mat, chi, chi);
        let dst = MatMut::from_row_major_slice_mut(&mut tmp, chi.pow(3), chi);
        let env = MatRef::from_row_major_slice(data, chi.pow(3), chi);
        match side {
            Side::Left => {
                // tmp = V · conj(A), all blocks stacked as one (χ³×χ)·(χ×χ) product
                matmul(dst, Accum::Replace, env, a.conjugate(), T::ONE, Par::Seq);
                scratch.left_multiply_blocks(a.transpose(), &tmp, &mut out, T::from_sign(sign));
            }
            Side::Right => {
                // tmp = R · A†
                matmul(dst, Accum::Replace, env, a.adjoint(), T::ONE, Par::Seq);
                scratch.left_multiply_blocks(a, &tmp, &mut out, T::from_sign(sign));
            }
        }
    }
    out
}

/// Prefix products `left[k] = E_0 ⋯ E_{k-1}` for `k ≤ upto` and suffix
/// products `right[k] = E_k ⋯ E_{N-1}` for every `k`.
struct RingEnvironments {
    left: Vec<Environment>,
    right: Vec<Environment>,
}

impl RingEnvironments {
    fn new(state: &TensorRingState, upto: usize) -> Self {
        let n = state.num_qubits;
        let chi = state.bond_dim;
        let mut left = Vec::with_capacity(upto + 1);
        left.push(Environment::identity(chi));
        for k in 0..upto {
            let next = left[k].push_left(&state.sites[k], ID_SIGNS);
            left.push(next);
        }
        let mut right = vec![Environment::identity(chi); n + 1];
        for k in (0..n).rev() {
            right[k] = right[k + 1].push_right(&state.sites[k], ID_SIGNS);
        }
        Self { left, right }
    }
}

/// Buffers for `dst_u += s · M · src_u` over the `χ²` blocks `u` of an
/// environment, done as one `(χ×χ)·(χ×χ³)` product on permuted data.
struct Scratch<T> {
    chi: usize,
    input: Vec<T>,
    product: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(chi: usize) -> Self {
        Self {
            chi,
            input: vec![T::ZERO; chi.pow(4)],
            product: vec![T::ZERO; chi.pow(4)],
        }
    }

    fn left_multiply_blocks(&mut self, m: MatRef<'_, T>, src: &[T], dst: &mut [T], sign: T) {
        let chi = self.chi;
        let chi2 = chi * chi;
        // input[b][u][y] = src[u][b][y]
        for u in 0..chi2 {
            for b in 0..chi {
                let from = &src[u * chi2 + b * chi..u * chi2 + (b + 1) * chi];
                self.input[b * chi2 * chi + u * chi..b * chi2 * chi + (u + 1) * chi].copy_from_slice(from);
            }
        }
        matmul(
            MatMut::from_row_major_slice_mut(&mut self.product, chi, chi2 * chi),
            Accum::Replace,
            m,
            MatRef::from_row_major_slice(&self.input, chi, chi2 * chi),
            sign,
            Par::Seq,
        );
        // dst[u][x][y] += product[x][u][y]
        for x in 0..chi {
            for u in 0..chi2 {
                let from = &self.product[x * chi2 * chi + u * chi..x * chi2 * chi + (u + 1) * chi];
                let to = &mut dst[u * chi2 + x * chi..u * chi2 + (x + 1) * chi];
                for (d, v) in to.iter_mut().zip(from) {
                    *d += *v;
                }
            }
        }
    }
}

/// `dst += v · m` for a row vector `v` and row-major `χ×χ` matrix `m`.
fn vecmat_acc(v: &[C64], m: &[C64], dst: &mut [C64], chi: usize) {
    for (b, &coef) in v.iter().enumerate() {
        if coef == C64::ZERO {
            continue;
        }
        let mrow = &m[b * chi..(b + 1) * chi];
        for (d, x) in dst.iter_mut().zip(mrow) {
            *d += coef * *x;
        }
    }
}
