//! Physical constants and default scenario values in normalized units.
//!
//! Normalization: the distance unit DU is the Earth–Moon separation, the time
//! unit TU makes the primaries' period 2π, and masses are scaled so the
//! gravitational parameter of the system is 1.

/// Earth–Moon mass ratio μ = m₂/(m₁+m₂).
pub const EARTH_MOON_MU: f64 = 0.012150585;

/// One normalized time unit in seconds (Earth–Moon system).
pub const TU_SECONDS: f64 = 375_190.0;

/// One normalized distance unit in kilometres (Earth–Moon separation).
pub const DU_KM: f64 = 384_400.0;

/// Arcseconds to radians.
pub const ARCSEC_TO_RAD: f64 = std::f64::consts::PI / 648_000.0;

/// Reject states closer than this to either primary (DU).
pub const PROXIMITY_GUARD: f64 = 1e-6;

/// Default collinearity threshold on 1 − c² for range reconstruction.
pub const COLLINEARITY_THRESHOLD: f64 = 1e-4;

/// NRHO initial truth state (x, y, z, ẋ, ẏ, ż) in normalized units.
pub const NRHO_INITIAL_STATE: [f64; 6] = [1.02950089, 0.0, -0.18680810, 0.0, -0.11898000, 0.0];

/// Initial estimation error x̃(0) = x(0) − x̂(0) for the reference experiment.
pub const NRHO_INITIAL_ESTIMATE_ERROR: [f64; 6] =
    [0.26e-4, -0.13e-4, 0.13e-4, 0.68e-4, -0.29e-4, 0.29e-4];

/// Operating bounds on r₁ (Earth range) along the reference NRHO, in DU.
pub const NRHO_R1_BOUNDS: (f64, f64) = (0.9495, 1.1112);

/// Operating bounds on r₂ (Moon range) along the reference NRHO, in DU.
pub const NRHO_R2_BOUNDS: (f64, f64) = (0.0111, 0.2010);

/// Default bearing-noise weight at the near end of each range interval (arcsec).
pub const DEFAULT_ETA_MIN_ARCSEC: f64 = 50.0;

/// Default bearing-noise weight at the far end of each range interval (arcsec).
pub const DEFAULT_ETA_MAX_ARCSEC: f64 = 500.0;

/// Default noise-shaping low-pass cutoff in physical hertz.
pub const DEFAULT_NOISE_CUTOFF_HZ: f64 = 0.1;

/// Default acceleration-disturbance amplitude (uniform, normalized units).
pub const DEFAULT_DISTURBANCE_AMPLITUDE: f64 = 0.01;

/// Default reference-experiment duration in TU.
pub const DEFAULT_DURATION_TU: f64 = 3.0;

/// Default fixed integration step for the coupled truth/observer loop (TU).
pub const DEFAULT_RK4_STEP: f64 = 1e-3;

/// Default absolute/relative tolerance for adaptive truth propagation.
pub const DEFAULT_RKF45_TOL: f64 = 1e-12;

/// Default settle time excluded from post-transient statistics (TU).
pub const DEFAULT_SETTLE_TU: f64 = 0.5;
