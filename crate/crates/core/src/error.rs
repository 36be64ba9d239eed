use thiserror::Error;

use crate::spectral::BasisKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpdeError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model norm {0} is not supported on this basis")]
    UnsupportedModelNorm(String),
    #[error("invalid truncation: keep {keep} of {available} modes")]
    InvalidTruncation { keep: usize, available: usize },
    #[error("coarsening factor {factor} does not divide {n_steps} steps")]
    IndivisibleFactor { factor: usize, n_steps: usize },
    #[error("model `{model}` requires a {expected:?} basis, got {got:?}")]
    BasisKindMismatch {
        model: String,
        expected: BasisKind,
        got: BasisKind,
    },
    #[error("non-finite state at t = {time} (path {path_id:?})")]
    NonFiniteState { time: f64, path_id: Option<u64> },
    #[error("model `{0}` has no diagonal linear part for the semi-implicit stepper")]
    NoLinearPart(String),
    #[error("time grid error: {0}")]
    TimeGrid(String),
    #[error("missing hypothesis data: {0}")]
    MissingHypothesisSpec(String),
    #[error("incomplete hypothesis spec: {0}")]
    IncompleteSpec(String),
    #[error("moment exponent p = {p} outside the admissible range [2, {upper})")]
    InadmissibleP { p: f64, upper: f64 },
    #[error("invalid delta: {0}")]
    InvalidDelta(String),
    #[error("invalid experiment parameters: {0}")]
    InvalidExperiment(String),
    #[error("noise dump: {0}")]
    NoiseDump(String),
}

pub type Result<T> = std::result::Result<T, SpdeError>;
