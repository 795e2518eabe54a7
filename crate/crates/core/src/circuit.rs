//! Gate set, parameterized circuits, the layered ring ansatz, SWAP routing
//! onto ring-adjacent pairs, and parameter shifting.
//!
//! Qubits are numbered from 0. In every two-qubit matrix the first listed
//! qubit is the more significant bit, so `Cnot { control, target }` has the
//! textbook form with the control as the high bit.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An angle that is either fixed or read from the global parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Param(usize),
}

impl Angle {
    pub fn resolve(self, params: &[f64]) -> Result<f64> {
        match self {
            Angle::Fixed(v) => Ok(v),
            Angle::Param(slot) => params.get(slot).copied().ok_or(Error::UnboundParameter {
                slot,
                len: params.len(),
            }),
        }
    }

    pub fn slot(self) -> Option<usize> {
        match self {
            Angle::Param(slot) => Some(slot),
            Angle::Fixed(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx {
        qubit: usize,
        angle: Angle,
    },
    Ry {
        qubit: usize,
        angle: Angle,
    },
    Rz {
        qubit: usize,
        angle: Angle,
    },
    H {
        qubit: usize,
    },
    Z {
        qubit: usize,
    },
    /// General single-qubit rotation `R(alpha, beta, gamma)`.
    R {
        qubit: usize,
        alpha: Angle,
        beta: Angle,
        gamma: Angle,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    Swap {
        a: usize,
        b: usize,
    },
}

impl Gate {
    /// Qubits the gate acts on, most significant first.
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Rx { qubit, .. }
            | Gate::Ry { qubit, .. }
            | Gate::Rz { qubit, .. }
            | Gate::H { qubit }
            | Gate::Z { qubit }
            | Gate::R { qubit, .. } => vec![qubit],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Swap { a, b } => vec![a, b],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cnot { .. } | Gate::Swap { .. })
    }

    pub fn angles(&self) -> Vec<Angle> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => {
                vec![angle]
            }
            Gate::R { alpha, beta, gamma, .. } => vec![alpha, beta, gamma],
            _ => Vec::new(),
        }
    }

    /// Parameter slots referenced by this gate.
    pub fn slots(&self) -> impl Iterator<Item = usize> {
        self.angles().into_iter().filter_map(Angle::slot)
    }

    /// Same gate acting on relabelled qubits.
    fn remap(&self, f: impl Fn(usize) -> usize) -> Gate {
        let mut g = *self;
        match &mut g {
            Gate::Rx { qubit, .. }
            | Gate::Ry { qubit, .. }
            | Gate::Rz { qubit, .. }
            | Gate::H { qubit }
            | Gate::Z { qubit }
            | Gate::R { qubit, .. } => *qubit = f(*qubit),
            Gate::Cnot { control, target } => {
                *control = f(*control);
                *target = f(*target);
            }
            Gate::Swap { a, b } => {
                *a = f(*a);
                *b = f(*b);
            }
        }
        g
    }
}

/// Concrete matrix of a gate: 2×2 for one qubit, 4×4 for two.
#[derive(Debug, Clone, PartialEq)]
pub enum GateMatrix {
    Single(Matrix2<C64>),
    Two(Matrix4<C64>),
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn rx_matrix(theta: f64) -> Matrix2<C64> {
    let (s, co) = (theta / 2.0).sin_cos();
    let mis = C64::new(0.0, -s);
    Matrix2::new(c(co), mis, mis, c(co))
}

pub fn ry_matrix(theta: f64) -> Matrix2<C64> {
    let (s, co) = (theta / 2.0).sin_cos();
    Matrix2::new(c(co), c(-s), c(s), c(co))
}

pub fn rz_matrix(theta: f64) -> Matrix2<C64> {
    Matrix2::new(
        C64::from_polar(1.0, -theta / 2.0),
        C64::ZERO,
        C64::ZERO,
        C64::from_polar(1.0, theta / 2.0),
    )
}

pub fn r_matrix(alpha: f64, beta: f64, gamma: f64) -> Matrix2<C64> {
    let (s, co) = (alpha / 2.0).sin_cos();
    Matrix2::new(
        c(co),
        -C64::from_polar(s, gamma),
        C64::from_polar(s, beta),
        C64::from_polar(co, beta + gamma),
    )
}

pub fn hadamard_matrix() -> Matrix2<C64> {
    let h = FRAC_1_SQRT_2;
    Matrix2::new(c(h), c(h), c(h), c(-h))
}

pub fn pauli_z_matrix() -> Matrix2<C64> {
    Matrix2::new(c(1.0), C64::ZERO, C64::ZERO, c(-1.0))
}

pub fn cnot_matrix() -> Matrix4<C64> {
    let (o, z) = (c(1.0), C64::ZERO);
    Matrix4::new(
        o, z, z, z, //
        z, o, z, z, //
        z, z, z, o, //
        z, z, o, z,
    )
}

pub fn swap_matrix() -> Matrix4<C64> {
    let (o, z) = (c(1.0), C64::ZERO);
    Matrix4::new(
        o, z, z, z, //
        z, z, o, z, //
        z, o, z, z, //
        z, z, z, o,
    )
}

/// Matrix realization of `gate` with its angles resolved against `params`.
pub fn gate_matrix(gate: &Gate, params: &[f64]) -> Result<GateMatrix> {
    Ok(match *gate {
        Gate::Rx { angle, .. } => GateMatrix::Single(rx_matrix(angle.resolve(params)?)),
        Gate::Ry { angle, .. } => GateMatrix::Single(ry_matrix(angle.resolve(params)?)),
        Gate::Rz { angle, .. } => GateMatrix::Single(rz_matrix(angle.resolve(params)?)),
        Gate::H { .. } => GateMatrix::Single(hadamard_matrix()),
        Gate::Z { .. } => GateMatrix::Single(pauli_z_matrix()),
        Gate::R { alpha, beta, gamma, .. } => GateMatrix::Single(r_matrix(
            alpha.resolve(params)?,
            beta.resolve(params)?,
            gamma.resolve(params)?,
        )),
        Gate::Cnot { .. } => GateMatrix::Two(cnot_matrix()),
        Gate::Swap { .. } => GateMatrix::Two(swap_matrix()),
    })
}

/// Largest entry of `|U U† - I|`.
pub fn unitarity_deviation<const D: usize>(m: &nalgebra::SMatrix<C64, D, D>) -> f64 {
    let prod = m * m.adjoint();
    let mut worst = 0.0f64;
    for i in 0..D {
        for j in 0..D {
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - c(expect)).norm());
        }
    }
    worst
}

/// A gate bound to concrete numbers, ready for a simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundGate {
    Single {
        qubit: usize,
        matrix: Matrix2<C64>,
    },
    /// `first` is the more significant qubit of `matrix`.
    Two {
        first: usize,
        second: usize,
        matrix: Matrix4<C64>,
    },
}

/// An ordered gate list on `num_qubits` qubits with `param_count` parameter slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitDocument", into = "CircuitDocument")]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    param_count: usize,
}

impl Circuit {
    /// Validates qubit indices and derives the parameter count from the
    /// highest referenced slot. Every slot below the count must be used.
    pub fn new(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::InvalidDimension("circuit needs at least one qubit".into()));
        }
        for gate in &gates {
            let qubits = gate.qubits();
            for &q in &qubits {
                if q >= num_qubits {
                    return Err(Error::IndexOutOfRange { index: q, num_qubits });
                }
            }
            if qubits.len() == 2 && qubits[0] == qubits[1] {
                return Err(Error::RepeatedQubit(qubits[0]));
            }
            if gate.angles().iter().skip(1).any(|a| a.slot().is_some()) {
                return Err(Error::InvalidConfig(
                    "only the first angle of a gate can be bound to a parameter slot".into(),
                ));
            }
        }
        let param_count = gates.iter().flat_map(Gate::slots).max().map_or(0, |m| m + 1);
        let mut used = vec![false; param_count];
        for slot in gates.iter().flat_map(Gate::slots) {
            used[slot] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidConfig(format!(
                "parameter slot {missing} is not referenced by any gate"
            )));
        }
        Ok(Self {
            num_qubits,
            gates,
            param_count,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Gate positions referencing each parameter slot.
    pub fn slot_positions(&self) -> Vec<Vec<usize>> {
        let mut positions = vec![Vec::new(); self.param_count];
        for (pos, gate) in self.gates.iter().enumerate() {
            for slot in gate.slots() {
                if !positions[slot].contains(&pos) {
                    positions[slot].push(pos);
                }
            }
        }
        positions
    }

    /// Resolves every gate against `params`.
    pub fn bind(&self, params: &[f64]) -> Result<Vec<BoundGate>> {
        if params.len() < self.param_count {
            return Err(Error::UnboundParameter {
                slot: params.len(),
                len: params.len(),
            });
        }
        self.gates
            .iter()
            .map(|gate| {
                let qubits = gate.qubits();
                Ok(match gate_matrix(gate, params)? {
                    GateMatrix::Single(matrix) => BoundGate::Single {
                        qubit: qubits[0],
                        matrix,
                    },
                    GateMatrix::Two(matrix) => BoundGate::Two {
                        first: qubits[0],
                        second: qubits[1],
                        matrix,
                    },
                })
            })
            .collect()
    }

    pub fn count_two_qubit(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }
}

/// True when `a` and `b` are neighbours on the ring `0 - 1 - ... - (n-1) - 0`.
pub fn ring_adjacent(a: usize, b: usize, n: usize) -> bool {
    a != b && ((a + 1) % n == b || (b + 1) % n == a)
}

/// The layered hardware-efficient ansatz: an Ry layer on every qubit, then
/// `depth` blocks of `[CNOT ring, Ry layer, CNOT ring, Ry layer]`.
///
/// The CNOT ring is `CNOT(k, k+1)` for `k = 0..n-2` followed by the closing
/// `CNOT(n-1, 0)`. Slots are numbered in gate order, giving
/// `n * (2 * depth + 1)` parameters.
pub fn build_ansatz(num_qubits: usize, depth: usize) -> Result<Circuit> {
    if num_qubits < 2 {
        return Err(Error::InvalidDimension(format!(
            "ansatz needs at least 2 qubits, got {num_qubits}"
        )));
    }
    if depth < 1 {
        return Err(Error::InvalidDimension("ansatz depth must be at least 1".into()));
    }
    let mut gates = Vec::with_capacity(num_qubits * (4 * depth + 1));
    let mut slot = 0;
    let mut ry_layer = |gates: &mut Vec<Gate>| {
        for qubit in 0..num_qubits {
            gates.push(Gate::Ry {
                qubit,
                angle: Angle::Param(slot),
            });
            slot += 1;
        }
    };
    let cx_ring = |gates: &mut Vec<Gate>| {
        for k in 0..num_qubits - 1 {
            gates.push(Gate::Cnot {
                control: k,
                target: k + 1,
            });
        }
        gates.push(Gate::Cnot {
            control: num_qubits - 1,
            target: 0,
        });
    };
    ry_layer(&mut gates);
    for _ in 0..depth {
        cx_ring(&mut gates);
        ry_layer(&mut gates);
        cx_ring(&mut gates);
        ry_layer(&mut gates);
    }
    Circuit::new(num_qubits, gates)
}

/// Returns `params` with `delta` added to entry `slot`.
pub fn shift_parameter(params: &[f64], slot: usize, delta: f64) -> Result<Vec<f64>> {
    if slot >= params.len() {
        return Err(Error::UnboundParameter {
            slot,
            len: params.len(),
        });
    }
    let mut shifted = params.to_vec();
    shifted[slot] += delta;
    Ok(shifted)
}

/// Rewrites every two-qubit gate onto ring-adjacent qubits.
///
/// The first operand is carried along the shorter ring arc towards the second
/// by a chain of adjacent SWAPs, the gate is applied, and the chain is undone.
/// On equal arcs the walk goes towards increasing index.
pub fn route_to_adjacent(circuit: &Circuit) -> Circuit {
    let n = circuit.num_qubits;
    let mut gates = Vec::with_capacity(circuit.gates.len());
    for gate in &circuit.gates {
        let qubits = gate.qubits();
        if qubits.len() != 2 || ring_adjacent(qubits[0], qubits[1], n) {
            gates.push(*gate);
            continue;
        }
        let (from, to) = (qubits[0], qubits[1]);
        let forward = (to + n - from) % n;
        let backward = n - forward;
        let (steps, step): (usize, fn(usize, usize) -> usize) = if forward <= backward {
            (forward - 1, |q, n| (q + 1) % n)
        } else {
            (backward - 1, |q, n| (q + n - 1) % n)
        };
        let mut chain = Vec::with_capacity(steps);
        let mut pos = from;
        for _ in 0..steps {
            let next = step(pos, n);
            chain.push(Gate::Swap { a: pos, b: next });
            pos = next;
        }
        gates.extend(chain.iter().copied());
        gates.push(gate.remap(|q| if q == from { pos } else { q }));
        gates.extend(chain.iter().rev().copied());
    }
    Circuit {
        num_qubits: n,
        gates,
        param_count: circuit.param_count,
    }
}

/// Random circuit of `layers` layers, each a random fixed-angle single-qubit
/// gate on every qubit followed by `num_qubits / 2` CNOTs on random (not
/// necessarily adjacent) pairs. Used by tests and benchmarks.
pub fn random_circuit<R: rand::Rng>(num_qubits: usize, layers: usize, rng: &mut R) -> Circuit {
    let mut gates = Vec::new();
    for _ in 0..layers {
        for qubit in 0..num_qubits {
            let kind = rng.random_range(0..5);
            let mut angle = || Angle::Fixed(rng.random_range(0.0..std::f64::consts::TAU));
            let gate = match kind {
                0 => Gate::Rx { qubit, angle: angle() },
                1 => Gate::Ry { qubit, angle: angle() },
                2 => Gate::Rz { qubit, angle: angle() },
                3 => Gate::H { qubit },
                _ => Gate::R {
                    qubit,
                    alpha: angle(),
                    beta: angle(),
                    gamma: angle(),
                },
            };
            gates.push(gate);
        }
        for _ in 0..(num_qubits / 2).max(1) {
            let control = rng.random_range(0..num_qubits);
            let mut target = rng.random_range(0..num_qubits - 1);
            if target >= control {
                target += 1;
            }
            gates.push(Gate::Cnot { control, target });
        }
    }
    Circuit::new(num_qubits, gates).expect("generated gates are in range")
}

/// JSON form of a circuit. Gate `kind` is one of
/// `rx ry rz h z r cnot swap`; `sites` are 0-based. For rotations, `slot`
/// binds the first angle to the parameter vector and `angles` lists the
/// remaining fixed angles; without a slot `angles` lists all of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitDocument {
    pub num_qubits: usize,
    pub gates: Vec<GateRecord>,
    pub param_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GateRecord {
    pub kind: String,
    pub sites: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
}

impl From<&Gate> for GateRecord {
    fn from(gate: &Gate) -> Self {
        let kind = match gate {
            Gate::Rx { .. } => "rx",
            Gate::Ry { .. } => "ry",
            Gate::Rz { .. } => "rz",
            Gate::H { .. } => "h",
            Gate::Z { .. } => "z",
            Gate::R { .. } => "r",
            Gate::Cnot { .. } => "cnot",
            Gate::Swap { .. } => "swap",
        };
        let angles = gate.angles();
        let slot = angles.first().and_then(|a| a.slot());
        // Circuit::new guarantees that only the first angle can be a slot.
        let fixed: Vec<f64> = angles
            .iter()
            .filter_map(|a| match a {
                Angle::Fixed(v) => Some(*v),
                Angle::Param(_) => None,
            })
            .collect();
        GateRecord {
            kind: kind.to_string(),
            sites: gate.qubits(),
            slot,
            angles: if fixed.is_empty() { None } else { Some(fixed) },
        }
    }
}

impl TryFrom<&GateRecord> for Gate {
    type Error = Error;

    fn try_from(rec: &GateRecord) -> Result<Gate> {
        let arity = match rec.kind.as_str() {
            "cnot" | "swap" => 2,
            _ => 1,
        };
        if rec.sites.len() != arity {
            return Err(Error::InvalidConfig(format!(
                "gate `{}` expects {arity} site(s), got {}",
                rec.kind,
                rec.sites.len()
            )));
        }
        let n_angles = match rec.kind.as_str() {
            "rx" | "ry" | "rz" => 1,
            "r" => 3,
            _ => 0,
        };
        let fixed = rec.angles.clone().unwrap_or_default();
        let mut angles: Vec<Angle> = Vec::with_capacity(n_angles);
        if n_angles > 0 {
            if let Some(slot) = rec.slot {
                angles.push(Angle::Param(slot));
            }
            angles.extend(fixed.iter().map(|&v| Angle::Fixed(v)));
        } else if rec.slot.is_some() || !fixed.is_empty() {
            return Err(Error::InvalidConfig(format!("gate `{}` takes no angles", rec.kind)));
        }
        if angles.len() != n_angles {
            return Err(Error::InvalidConfig(format!(
                "gate `{}` expects {n_angles} angle(s), got {}",
                rec.kind,
                angles.len()
            )));
        }
        let q = rec.sites[0];
        Ok(match rec.kind.as_str() {
            "rx" => Gate::Rx {
                qubit: q,
                angle: angles[0],
            },
            "ry" => Gate::Ry {
                qubit: q,
                angle: angles[0],
            },
            "rz" => Gate::Rz {
                qubit: q,
                angle: angles[0],
            },
            "h" => Gate::H { qubit: q },
            "z" => Gate::Z { qubit: q },
            "r" => Gate::R {
                qubit: q,
                alpha: angles[0],
                beta: angles[1],
                gamma: angles[2],
            },
            "cnot" => Gate::Cnot {
                control: q,
                target: rec.sites[1],
            },
            "swap" => Gate::Swap { a: q, b: rec.sites[1] },
            other => return Err(Error::InvalidConfig(format!("unknown gate kind `{other}`"))),
        })
    }
}

impl From<Circuit> for CircuitDocument {
    fn from(circuit: Circuit) -> Self {
        CircuitDocument {
            num_qubits: circuit.num_qubits,
            gates: circuit.gates.iter().map(GateRecord::from).collect(),
            param_count: circuit.param_count,
        }
    }
}

impl TryFrom<CircuitDocument> for Circuit {
    type Error = Error;

    fn try_from(doc: CircuitDocument) -> Result<Circuit> {
        let gates = doc.gates.iter().map(Gate::try_from).collect::<Result<Vec<_>>>()?;
        let circuit = Circuit::new(doc.num_qubits, gates)?;
        if circuit.param_count != doc.param_count {
            return Err(Error::InvalidConfig(format!(
                "param_count {} does not match the {} slots referenced by the gates",
                doc.param_count, circuit.param_count
            )));
        }
        Ok(circuit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn assert_mat_eq<const D: usize>(a: &nalgebra::SMatrix<C64, D, D>, b: &nalgebra::SMatrix<C64, D, D>) {
        for i in 0..D {
            for j in 0..D {
                assert_abs_diff_eq!(a[(i, j)].re, b[(i, j)].re, epsilon = 1e-15);
                assert_abs_diff_eq!(a[(i, j)].im, b[(i, j)].im, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn hadamard_entries() {
        let h = 1.0 / 2f64.sqrt();
        let expect = Matrix2::new(c(h), c(h), c(h), c(-h));
        assert_mat_eq(&hadamard_matrix(), &expect);
    }

    #[test]
    fn zero_angle_rotations_are_identity() {
        let id = Matrix2::<C64>::identity();
        assert_mat_eq(&rz_matrix(0.0), &id);
        assert_mat_eq(&rx_matrix(0.0), &id);
        assert_mat_eq(&ry_matrix(0.0), &id);
        assert_mat_eq(&r_matrix(0.0, 0.0, 0.0), &id);
    }

    #[test]
    fn ry_pi_flips_with_sign() {
        let expect = Matrix2::new(C64::ZERO, c(-1.0), c(1.0), C64::ZERO);
        let got = ry_matrix(PI);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((got[(i, j)] - expect[(i, j)]).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cnot_control_is_high_bit() {
        let m = cnot_matrix();
        // |10> -> |11>
        assert_eq!(m[(3, 2)], c(1.0));
        assert_eq!(m[(2, 2)], C64::ZERO);
        assert!(unitarity_deviation(&m) < 1e-15);
        assert!(unitarity_deviation(&swap_matrix()) < 1e-15);
    }

    #[test]
    fn unbound_parameter_is_reported() {
        let g = Gate::Ry {
            qubit: 0,
            angle: Angle::Param(3),
        };
        assert!(matches!(
            gate_matrix(&g, &[0.0, 1.0]),
            Err(Error::UnboundParameter { slot: 3, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn rotations_match_closed_forms(t in -10.0f64..10.0, b in -10.0f64..10.0, g in -10.0f64..10.0) {
            let (s, co) = (t / 2.0).sin_cos();
            let rx = rx_matrix(t);
            prop_assert!((rx[(0, 1)] - C64::new(0.0, -s)).norm() < 1e-15);
            prop_assert!((rx[(1, 1)] - c(co)).norm() < 1e-15);
            let ry = ry_matrix(t);
            prop_assert!((ry[(0, 1)] - c(-s)).norm() < 1e-15);
            prop_assert!((ry[(1, 0)] - c(s)).norm() < 1e-15);
            let rz = rz_matrix(t);
            prop_assert!((rz[(0, 0)] - C64::new(co, -s)).norm() < 1e-15);
            prop_assert!((rz[(1, 1)] - C64::new(co, s)).norm() < 1e-15);
            let r = r_matrix(t, b, g);
            prop_assert!((r[(0, 1)] + C64::new(g.cos() * s, g.sin() * s)).norm() < 1e-14);
            prop_assert!((r[(1, 0)] - C64::new(b.cos() * s, b.sin() * s)).norm() < 1e-14);
            prop_assert!((r[(1, 1)] - C64::new((b + g).cos() * co, (b + g).sin() * co)).norm() < 1e-14);
            for m in [rx, ry, rz, r] {
                prop_assert!(unitarity_deviation(&m) < 1e-12);
            }
        }
    }

    #[test]
    fn ansatz_counts() {
        let c4 = build_ansatz(4, 1).unwrap();
        assert_eq!(c4.param_count(), 12);
        assert_eq!(c4.count_two_qubit(), 8);
        assert_eq!(build_ansatz(10, 1).unwrap().param_count(), 30);
        assert_eq!(build_ansatz(10, 3).unwrap().param_count(), 70);
        assert_eq!(build_ansatz(4, 1).unwrap(), c4);
        assert!(build_ansatz(1, 1).is_err());
        assert!(build_ansatz(4, 0).is_err());
    }

    #[test]
    fn two_qubit_ansatz_keeps_literal_ring() {
        let c2 = build_ansatz(2, 1).unwrap();
        let cx: Vec<_> = c2.gates().iter().filter(|g| g.is_two_qubit()).copied().collect();
        assert_eq!(
            cx,
            vec![
                Gate::Cnot { control: 0, target: 1 },
                Gate::Cnot { control: 1, target: 0 },
                Gate::Cnot { control: 0, target: 1 },
                Gate::Cnot { control: 1, target: 0 },
            ]
        );
        assert_eq!(c2.param_count(), 6);
    }

    #[test]
    fn ansatz_cnots_are_ring_adjacent() {
        for n in 2..12 {
            let circ = build_ansatz(n, 2).unwrap();
            for g in circ.gates().iter().filter(|g| g.is_two_qubit()) {
                let q = g.qubits();
                assert!(ring_adjacent(q[0], q[1], n));
            }
        }
    }

    #[test]
    fn shift_and_unshift() {
        assert_eq!(shift_parameter(&[0.0, 0.0], 0, PI / 2.0).unwrap(), vec![PI / 2.0, 0.0]);
        assert_eq!(shift_parameter(&[1.0], 0, -PI / 2.0).unwrap(), vec![1.0 - PI / 2.0]);
        assert!(shift_parameter(&[1.0], 1, PI / 2.0).is_err());
        let theta = vec![0.5, 0.0, 0.0];
        let back = shift_parameter(&shift_parameter(&theta, 0, 0.5).unwrap(), 0, -0.5).unwrap();
        assert_eq!(back, theta);
    }

    #[test]
    fn routing_examples() {
        let adjacent = build_ansatz(4, 1).unwrap();
        assert_eq!(route_to_adjacent(&adjacent), adjacent);

        let far = Circuit::new(4, vec![Gate::Cnot { control: 0, target: 2 }]).unwrap();
        assert_eq!(
            route_to_adjacent(&far).gates(),
            &[
                Gate::Swap { a: 0, b: 1 },
                Gate::Cnot { control: 1, target: 2 },
                Gate::Swap { a: 0, b: 1 },
            ]
        );

        let closing = Circuit::new(4, vec![Gate::Cnot { control: 0, target: 3 }]).unwrap();
        assert_eq!(route_to_adjacent(&closing), closing);
    }

    #[test]
    fn routing_prefers_shorter_arc() {
        let c = Circuit::new(8, vec![Gate::Cnot { control: 1, target: 6 }]).unwrap();
        let routed = route_to_adjacent(&c);
        // backward arc 1 -> 0 -> 7 (adjacent to 6) is shorter than 1 -> 5
        assert_eq!(
            routed.gates(),
            &[
                Gate::Swap { a: 1, b: 0 },
                Gate::Swap { a: 0, b: 7 },
                Gate::Cnot { control: 7, target: 6 },
                Gate::Swap { a: 0, b: 7 },
                Gate::Swap { a: 1, b: 0 },
            ]
        );
    }

    #[test]
    fn circuit_validation() {
        assert!(matches!(
            Circuit::new(2, vec![Gate::H { qubit: 2 }]),
            Err(Error::IndexOutOfRange { index: 2, .. })
        ));
        assert!(Circuit::new(2, vec![Gate::Cnot { control: 1, target: 1 }]).is_err());
        assert!(Circuit::new(
            2,
            vec![Gate::Ry {
                qubit: 0,
                angle: Angle::Param(1)
            }]
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut gates = build_ansatz(3, 1).unwrap().gates().to_vec();
        gates.push(Gate::R {
            qubit: 1,
            alpha: Angle::Fixed(0.1),
            beta: Angle::Fixed(0.2),
            gamma: Angle::Fixed(0.3),
        });
        gates.push(Gate::H { qubit: 2 });
        let circuit = Circuit::new(3, gates).unwrap();
        let text = serde_json::to_string(&circuit).unwrap();
        let back: Circuit = serde_json::from_str(&text).unwrap();
        assert_eq!(back, circuit);
    }

    #[test]
    fn json_rejects_inconsistent_param_count() {
        let text = r#"{"num_qubits":2,"gates":[{"kind":"ry","sites":[0],"slot":0}],"param_count":3}"#;
        assert!(serde_json::from_str::<Circuit>(text).is_err());
        let ok = r#"{"num_qubits":2,"gates":[{"kind":"ry","sites":[0],"slot":0},{"kind":"cnot","sites":[0,1]}],"param_count":1}"#;
        let c: Circuit = serde_json::from_str(ok).unwrap();
        assert_eq!(c.gates()[1], Gate::Cnot { control: 0, target: 1 });
    }
}
