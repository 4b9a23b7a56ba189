use circuit_core::{CircuitError, Rational};
use qp_compiler::{KktVerdict, QpError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KktError {
    #[error("iteration budget exhausted after {iterations} iterations")]
    BudgetExhausted {
        iterations: usize,
        best: Vec<Rational>,
        verdict: KktVerdict,
    },
    #[error("{vars} variables exceed the enumeration cap of {cap}")]
    TooManyVariables { vars: usize, cap: usize },
    #[error("approximate point is not an eps-KKT point")]
    NotApproximateKkt,
    #[error("LP(I0,I1) optimum is {0}, not zero: eps is above the gap")]
    NonzeroLpOptimum(Rational),
    #[error("rounded point failed the exact KKT check")]
    RoundingFailed,
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gradient set grew beyond {0} vertices")]
    HullTooLarge(usize),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}
