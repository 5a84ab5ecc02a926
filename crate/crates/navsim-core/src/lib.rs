//! Cislunar bearing-only navigation core library.
//!
//! Implements the circular restricted three-body problem (CR3BP) in the
//! normalized Earth–Moon rotating frame, its exact linear parameter-varying
//! (LPV) factorization scheduled on the two primary ranges ρ = (r₁, r₂),
//! bearing-only optical sensing with range-dependent noise, H∞ synthesis of a
//! static full-order observer gain over a parameter box, and a closed-loop
//! simulation harness that co-integrates truth and estimate.
//!
//! Module map:
//! - [`constants`]: physical and scenario constants (normalized units).
//! - [`error`]: the crate-wide error type.
//! - [`cr3bp`]: nonlinear dynamics, Jacobi constant, RK4/RKF45 propagation.
//! - [`lft`]: parameter box, LPV plant/measurement matrices, LFT evaluation.
//! - [`sensing`]: line-of-sight measurements, shaped noise, range
//!   reconstruction from bearings.
//! - [`hinf`]: H∞ norm computation and observer-gain synthesis.
//! - [`observer`]: parameter scheduling and the coupled truth/observer step.
//! - [`scenario`]: JSON scenario configuration.
//! - [`sim`]: end-to-end runs, Monte Carlo batches, CSV/summary output.

pub mod constants;
pub mod cr3bp;
pub mod error;
pub mod hinf;
pub mod lft;
pub mod observer;
pub mod scenario;
pub mod sensing;
pub mod sim;

pub use error::NavError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, NavError>;
