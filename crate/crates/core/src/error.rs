use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh level {level} exceeds the hierarchy cap {max}")]
    LevelCap { level: u32, max: u32 },

    #[error("level 0 meshes have no interior degrees of freedom")]
    EmptyLevel,

    #[error("trial level {trial} is finer than test level {test}; assemble the transpose")]
    LevelOrder { test: u32, trial: u32 },

    #[error("spaces live on different domains")]
    DomainMismatch,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("eigenvalue root bracketing failed: {0}")]
    RootBracketing(String),

    #[error("coefficient lower bound is not positive (a_min = {a_min})")]
    NonPositiveCoefficient { a_min: f64 },

    #[error("reference energy squared {reference_sq} does not exceed the computed energy {energy_sq}")]
    StaleReference { reference_sq: f64, energy_sq: f64 },

    #[error("slope fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("adaptive run stopped by a safety cap ({0}) before reaching the tolerance")]
    CapExhausted(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
