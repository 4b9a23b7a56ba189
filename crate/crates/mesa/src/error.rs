use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MesaError {
    #[error("no field entry for grid point ({i}, {j})")]
    MissingGridPoint { i: usize, j: usize },
    #[error("target violates its declared range: {0}")]
    TargetOutOfRange(String),
    #[error("sampled field misses its tolerance: {0}")]
    ToleranceViolation(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("grid needs at least one bit")]
    BadGrid,
}
