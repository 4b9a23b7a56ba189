use circuit_core::CircuitError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QpError {
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error("expected a point with {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} lies outside [0,1]")]
    OutsideBox { index: usize },
    #[error("variable index {index} out of range for {vars} variables")]
    IndexOutOfRange { index: usize, vars: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("point is not an exact KKT point ({violations} violated conditions)")]
    NotKkt { violations: usize },
    #[error("perturbed circuit is not differentiable at the point (sign pattern {0})")]
    NonDifferentiable(String),
    #[error("too many non-zero perturbations to enumerate ({0})")]
    TooManySigns(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}
