//! Exact dense simulation, used as the ground-truth oracle.

use num_complex::Complex64 as C64;

use crate::circuit::{BoundGate, Circuit};
use crate::error::{Error, Result};
use crate::maxcut::IsingHamiltonian;

/// Largest register the dense simulator accepts.
pub const DENSE_CAP: usize = 20;

/// A full `2^N` amplitude vector, qubit 0 as the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl DenseState {
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits > DENSE_CAP {
            return Err(Error::SizeCap {
                what: "dense simulation",
                cap: DENSE_CAP,
                got: num_qubits,
            });
        }
        let mut amplitudes = vec![C64::ZERO; 1 << num_qubits];
        amplitudes[0] = C64::ONE;
        Ok(Self { num_qubits, amplitudes })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply(&mut self, gate: &BoundGate) {
        let n = self.num_qubits;
        match gate {
            BoundGate::Single { qubit, matrix } => {
                let mask = 1usize << (n - 1 - qubit);
                let (u00, u01, u10, u11) = (matrix[(0, 0)], matrix[(0, 1)], matrix[(1, 0)], matrix[(1, 1)]);
                for b in 0..self.amplitudes.len() {
                    if b & mask == 0 {
                        let (x0, x1) = (self.amplitudes[b], self.amplitudes[b | mask]);
                        self.amplitudes[b] = u00 * x0 + u01 * x1;
                        self.amplitudes[b | mask] = u10 * x0 + u11 * x1;
                    }
                }
            }
            BoundGate::Two { first, second, matrix } => {
                let hi = 1usize << (n - 1 - first);
                let lo = 1usize << (n - 1 - second);
                let offsets = [0, lo, hi, hi | lo];
                for b in 0..self.amplitudes.len() {
                    if b & (hi | lo) != 0 {
                        continue;
                    }
                    let x = offsets.map(|o| self.amplitudes[b | o]);
                    for (row, o) in offsets.iter().enumerate() {
                        self.amplitudes[b | o] = (0..4).map(|k| matrix[(row, k)] * x[k]).sum();
                    }
                }
            }
        }
    }
}

/// Runs `circuit` bound to `params` on `|0…0⟩`.
pub fn simulate_exact(circuit: &Circuit, params: &[f64]) -> Result<DenseState> {
    let mut state = DenseState::zero(circuit.num_qubits())?;
    for gate in circuit.bind(params)? {
        state.apply(&gate);
    }
    Ok(state)
}

/// `⟨ψ|H|ψ⟩` evaluated on the diagonal; the `2^N × 2^N` matrix is never built.
pub fn expectation_exact(state: &DenseState, ham: &IsingHamiltonian) -> Result<f64> {
    if ham.num_qubits() != state.num_qubits {
        return Err(Error::InvalidDimension(format!(
            "Hamiltonian acts on {} qubits, state has {}",
            ham.num_qubits(),
            state.num_qubits
        )));
    }
    Ok(ham.diagonal_expectation(&state.probabilities()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_ansatz, Angle, Gate};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bell() -> Circuit {
        Circuit::new(2, vec![Gate::H { qubit: 0 }, Gate::Cnot { control: 0, target: 1 }]).unwrap()
    }

    #[test]
    fn empty_circuit_is_zero_state() {
        let s = simulate_exact(&Circuit::new(3, vec![]).unwrap(), &[]).unwrap();
        assert_eq!(s.amplitudes()[0], C64::ONE);
        assert!(s.amplitudes()[1..].iter().all(|a| *a == C64::ZERO));
    }

    #[test]
    fn bell_amplitudes() {
        let s = simulate_exact(&bell(), &[]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let expect = [h, 0.0, 0.0, h];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn diagonal_expectations() {
        let zz = IsingHamiltonian::new(2, vec![(0, 1, 1.0)]).unwrap();
        let zero = simulate_exact(&Circuit::new(2, vec![]).unwrap(), &[]).unwrap();
        assert_eq!(expectation_exact(&zero, &zz).unwrap(), 1.0);
        let plus = Circuit::new(2, vec![Gate::H { qubit: 0 }, Gate::H { qubit: 1 }]).unwrap();
        let s = simulate_exact(&plus, &[]).unwrap();
        assert_abs_diff_eq!(expectation_exact(&s, &zz).unwrap(), 0.0, epsilon = 1e-15);
        let b = simulate_exact(&bell(), &[]).unwrap();
        assert_abs_diff_eq!(expectation_exact(&b, &zz).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ansatz_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 6, 9] {
            let c = build_ansatz(n, 2).unwrap();
            let params: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.3)).collect();
            let s = simulate_exact(&c, &params).unwrap();
            assert_abs_diff_eq!(s.norm_squared(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn swap_moves_amplitude() {
        // |10> --SWAP--> |01>
        let c = Circuit::new(
            2,
            vec![
                Gate::Rx {
                    qubit: 0,
                    angle: Angle::Fixed(std::f64::consts::PI),
                },
                Gate::Swap { a: 0, b: 1 },
            ],
        )
        .unwrap();
        let s = simulate_exact(&c, &[]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn size_cap() {
        assert!(matches!(DenseState::zero(21), Err(Error::SizeCap { .. })));
    }
}
