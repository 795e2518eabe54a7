use thiserror::Error;

/// Errors produced by the simulation, optimization and file-format layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    IndexOutOfRange { index: usize, num_qubits: usize },

    #[error("gate is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("qubits {0} and {1} are not ring-adjacent; route the circuit with SWAPs first")]
    RoutingRequired(usize, usize),

    #[error("qubits must be distinct, got {0} twice")]
    RepeatedQubit(usize),

    #[error("parameter slot {slot} is unbound (parameter vector has length {len})")]
    UnboundParameter { slot: usize, len: usize },

    #[error("{what} exceeds the cap of {cap} qubits (got {got})")]
    SizeCap { what: &'static str, cap: usize, got: usize },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("singular value decomposition of a {size}x{size} matrix did not converge")]
    SvdFailed { size: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("assignment has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate instance: maximum and minimum energy coincide ({0})")]
    DegenerateInstance(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backend failed while evaluating parameter slot {slot}: {source}")]
    Backend {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    /// Training produced a NaN or infinity; `trace` holds the iterations
    /// completed before the failure.
    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite {
        quantity: &'static str,
        iteration: usize,
        trace: Box<crate::vqe::TrainTrace>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
