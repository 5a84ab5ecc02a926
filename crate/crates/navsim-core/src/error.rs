//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the navigation library.
#[derive(Debug, Error)]
pub enum NavError {
    /// A state is too close to one of the primaries for the force model.
    #[error("degenerate distance to a primary: r1 = {r1:.6e} DU, r2 = {r2:.6e} DU (guard {guard:.1e} DU)")]
    DegenerateDistance { r1: f64, r2: f64, guard: f64 },

    /// The adaptive step-size controller could not meet its tolerance.
    #[error("integration step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    /// Line-of-sight geometry too close to collinear for range reconstruction.
    #[error("near-collinear lines of sight: 1 - c^2 = {one_minus_c2:.3e} < threshold {threshold:.3e}")]
    NearCollinear { one_minus_c2: f64, threshold: f64 },

    /// Range reconstruction produced a non-physical (non-positive) range.
    #[error("non-positive reconstructed range: r1 = {r1:.6e}, r2 = {r2:.6e}")]
    NonPositiveRange { r1: f64, r2: f64 },

    /// A scheduling parameter lies outside its certified interval.
    #[error("parameter out of box: {name} = {value:.6e} outside [{min:.6e}, {max:.6e}]")]
    OutOfBox {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// LFT feedback inversion is numerically singular.
    #[error("ill-posed LFT evaluation: condition number {cond:.3e} exceeds {limit:.1e}")]
    IllPosed { cond: f64, limit: f64 },

    /// The system matrix is not Hurwitz, so the H∞ norm is unbounded.
    #[error("system is not Hurwitz: spectral abscissa {abscissa:.6e} >= 0")]
    Unstable { abscissa: f64 },

    /// The pair (A, C) is not observable at the requested parameter.
    #[error("pair (A, C) not observable: observability rank {rank} < {dim}")]
    NotObservable { rank: usize, dim: usize },

    /// Gain synthesis could not produce a certified stabilizing gain.
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),

    /// A configuration file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A configuration value violates an invariant.
    #[error("invalid configuration: {field}: {message}")]
    Validation { field: String, message: String },

    /// A run CSV does not match the expected schema.
    #[error("CSV schema error: {0}")]
    Schema(String),

    /// A gain certificate does not cover the scenario's parameter box.
    #[error("gain/scenario box mismatch: {0}")]
    BoxMismatch(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl NavError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// synthesis failures, 4 for runtime numerical/I-O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            NavError::Parse(_)
            | NavError::Validation { .. }
            | NavError::Schema(_)
            | NavError::BoxMismatch(_) => 2,
            NavError::SynthesisFailed(_) | NavError::NotObservable { .. } => 3,
            _ => 4,
        }
    }
}
