use thiserror::Error;

use crate::model::ValidationReport;

/// Errors raised across the reduction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular or too ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("invalid model:\n{0}")]
    InvalidModel(ValidationReport),

    #[error("unknown {kind} `{name}`")]
    UnknownId { kind: &'static str, name: String },

    #[error("state norm exceeded {limit:e} at t = {time}")]
    Diverged { time: f64, limit: f64 },

    #[error("input signal must be piecewise constant for exact propagation")]
    NotPiecewiseConstant,

    #[error("LMIs infeasible after {iterations} iterations (worst residual eigenvalue {worst:e}): {reason}")]
    Infeasible {
        iterations: usize,
        worst: f64,
        reason: String,
    },

    #[error("LMI solver did not converge: {0}")]
    NonConvergent(String),

    #[error("Gramian family is not a valid {0} certificate")]
    InvalidCertificate(&'static str),

    #[error("balancing is ill-conditioned in mode {mode}: sigma_min/sigma_max = {ratio:e}")]
    IllConditionedBalancing { mode: String, ratio: f64 },

    #[error("balancing identity check failed in mode {mode}: relative error {error:e}")]
    BalancingCheckFailed { mode: String, error: f64 },

    #[error("invalid reduction orders: {0}")]
    InvalidOrders(String),

    #[error("V-diagnostic requires n_q - r_q <= 1 for every mode; mode {mode} truncates {dropped} states")]
    GeometryMismatch { mode: String, dropped: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
