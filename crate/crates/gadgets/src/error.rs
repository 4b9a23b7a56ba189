use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GadgetError {
    #[error("width budget exceeded: {0}")]
    WidthBudget(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(".bool line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("malformed Boolean circuit: {0}")]
    Boolean(String),
    #[error(transparent)]
    Circuit(#[from] circuit_core::CircuitError),
    #[error(transparent)]
    Mesa(#[from] mesa::MesaError),
}
