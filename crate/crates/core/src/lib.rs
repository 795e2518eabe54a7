//! Classical simulation of variational quantum eigensolver circuits through a
//! rank-truncated tensor-ring state, with parameter-shift gradients, a Max-Cut
//! front end and an exact statevector oracle.

pub mod bench;
pub mod circuit;
pub mod error;
pub mod maxcut;
pub mod statevector;
pub mod tensor_ring;
pub mod vqe;

pub use circuit::{build_ansatz, route_to_adjacent, shift_parameter, Angle, Circuit, Gate};
pub use error::{Error, Result};
pub use maxcut::{
    approximation_ratio, brute_force_extremes, cut_value, hamiltonian_from_graph, random_graph, CutAssignment,
    IsingHamiltonian, WeightedGraph,
};
pub use statevector::{expectation_exact, simulate_exact, DenseState};
pub use tensor_ring::{ContractionMethod, GateTensor2Q, TensorRingState};
pub use vqe::{
    gradient_distance, parameter_shift_gradient, run_vqe, Backend, ExactBackend, OptimizerConfig, TensorRingBackend,
    TrainTrace,
};
