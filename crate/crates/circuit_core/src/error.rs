use thiserror::Error;

/// Everything that can go wrong while building, reading or running a circuit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("gate {gate} reads wire {wire}, which is not strictly earlier")]
    Topology { gate: usize, wire: usize },
    #[error("wire index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("malformed rational token `{0}`")]
    BadRational(String),
    #[error("gate {gate}: truncation interval requires lo < hi")]
    EmptyInterval { gate: usize },
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("perturbation inconsistent with circuit: {0}")]
    Perturbation(String),
    #[error("gate {gate} is not a trunc-linear gate; normalize the circuit first")]
    ExtendedGate { gate: usize },
    #[error("circuit must have at least one input")]
    NoInputs,
}
