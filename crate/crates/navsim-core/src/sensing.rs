//! Bearing-only measurement generation with range-dependent noise, and
//! reconstruction of the primary ranges from line-of-sight unit vectors.
//!
//! Geometry: with the Earth at E = (−μ, 0, 0), the Moon at M = (1−μ, 0, 0)
//! and the spacecraft at p, the unit lines of sight ê₁ = (E−p)/r₁ and
//! ê₂ = (M−p)/r₂ satisfy the baseline closure r₂ê₂ − r₁ê₁ = M − E = ê_x.
//! Taking dot products of the closure with ê₁ and ê₂ yields a 2×2 linear
//! system whose solution is the closed-form range formula implemented here.

use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{
    ARCSEC_TO_RAD, COLLINEARITY_THRESHOLD, DEFAULT_ETA_MAX_ARCSEC, DEFAULT_ETA_MIN_ARCSEC,
    DEFAULT_NOISE_CUTOFF_HZ, TU_SECONDS,
};
use crate::cr3bp::{primary_distances, MassRatio, StateVector};
use crate::lft::{noise_weight, ParamBox};
use crate::{NavError, Result};

/// A noisy pair of line-of-sight unit vectors (spacecraft→Earth and
/// spacecraft→Moon). Components carry additive noise, so the stored vectors
/// are not exactly unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingMeasurement {
    /// Measured LOS toward the first primary.
    pub e1_meas: Vector3<f64>,
    /// Measured LOS toward the second primary.
    pub e2_meas: Vector3<f64>,
}

impl BearingMeasurement {
    /// The stacked 6-vector y_m = (ê₁; ê₂) + noise.
    pub fn y_m(&self) -> Vector6<f64> {
        let mut y = Vector6::zeros();
        y.fixed_rows_mut::<3>(0).copy_from(&self.e1_meas);
        y.fixed_rows_mut::<3>(3).copy_from(&self.e2_meas);
        y
    }
}

/// Configuration of the bearing-noise model.
///
/// η weights are given in arcseconds and converted to radians where they
/// scale unit-vector components; the shaping filter cutoff is in physical
/// hertz and converted with the TU length; `sample_rate` is in samples per
/// TU. At the default rate and cutoff the filter coefficient underflows to
/// zero and the source degenerates to per-sample white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelConfig {
    /// Weight at the near end of each range interval, arcsec.
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    /// Weight at the far end of each range interval, arcsec.
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    /// Shaping low-pass cutoff frequency, Hz (physical seconds).
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Noise sample rate, samples per TU.
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Generator seed.
    #[serde(default)]
    pub seed: u64,
}

fn default_eta_min() -> f64 {
    DEFAULT_ETA_MIN_ARCSEC
}
fn default_eta_max() -> f64 {
    DEFAULT_ETA_MAX_ARCSEC
}
fn default_cutoff() -> f64 {
    DEFAULT_NOISE_CUTOFF_HZ
}
fn default_sample_rate() -> f64 {
    1.0 / crate::constants::DEFAULT_RK4_STEP
}

impl Default for NoiseModelConfig {
    fn default() -> Self {
        NoiseModelConfig {
            eta_min: default_eta_min(),
            eta_max: default_eta_max(),
            cutoff: default_cutoff(),
            sample_rate: default_sample_rate(),
            seed: 0,
        }
    }
}

impl NoiseModelConfig {
    /// Validates 0 < η_min ≤ η_max, cutoff > 0, sample_rate > 0.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(NavError::Validation {
                field: format!("noise.{field}"),
                message,
            })
        };
        if !(self.eta_min.is_finite() && self.eta_min >= 0.0) {
            return bad("eta_min", format!("must be non-negative, got {}", self.eta_min));
        }
        if !(self.eta_max.is_finite() && self.eta_max >= self.eta_min) {
            return bad(
                "eta_max",
                format!("must be >= eta_min, got {} < {}", self.eta_max, self.eta_min),
            );
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return bad("cutoff", format!("must be positive, got {}", self.cutoff));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad(
                "sample_rate",
                format!("must be positive, got {}", self.sample_rate),
            );
        }
        Ok(())
    }

    /// η_min in radians.
    pub fn eta_min_rad(&self) -> f64 {
        self.eta_min * ARCSEC_TO_RAD
    }

    /// η_max in radians.
    pub fn eta_max_rad(&self) -> f64 {
        self.eta_max * ARCSEC_TO_RAD
    }
}

/// Shaped (band-limited) unit-variance noise source: per channel,
/// Gaussian white noise through a first-order low pass at the configured
/// cutoff, rescaled to unit steady-state variance.
///
/// Discretized on the sample grid this is the AR(1) recursion
/// x[k+1] = a·x[k] + √(1−a²)·ξ[k] with a = exp(−ω_c/rate) and ω_c the
/// cutoff in rad/TU; the chain is initialized from its stationary
/// distribution. Holds generator state: use one instance per run.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha12Rng,
    coeff: f64,
    innovation_scale: f64,
    current: Vector6<f64>,
    index: u64,
    sample_rate: f64,
}

impl NoiseSource {
    /// Builds the source from its configuration (deterministic given seed).
    pub fn new(cfg: &NoiseModelConfig) -> Result<Self> {
        cfg.validate()?;
        let omega_c = 2.0 * std::f64::consts::PI * cfg.cutoff * TU_SECONDS; // rad/TU
        let a = (-omega_c / cfg.sample_rate).exp();
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let mut current = Vector6::zeros();
        for i in 0..6 {
            current[i] = StandardNormal.sample(&mut rng);
        }
        Ok(NoiseSource {
            rng,
            coeff: a,
            innovation_scale: (1.0 - a * a).sqrt(),
            current,
            index: 0,
            sample_rate: cfg.sample_rate,
        })
    }

    fn advance(&mut self) {
        let mut xi = Vector6::zeros();
        for i in 0..6 {
            xi[i] = StandardNormal.sample(&mut self.rng);
        }
        self.current = self.coeff * self.current + self.innovation_scale * xi;
        self.index += 1;
    }

    /// The noise vector active at time `t` (zero-order hold between
    /// samples). Times must be queried in non-decreasing order.
    pub fn sample_at(&mut self, t: f64) -> Vector6<f64> {
        let target = (t * self.sample_rate + 1e-6).floor().max(0.0) as u64;
        while self.index < target {
            self.advance();
        }
        self.current
    }

    /// The next sample in sequence (advances the chain by one).
    pub fn next_sample(&mut self) -> Vector6<f64> {
        let v = self.current;
        self.advance();
        v
    }
}

/// Builds a shaped noise source from its configuration.
pub fn shaped_noise_source(cfg: &NoiseModelConfig) -> Result<NoiseSource> {
    NoiseSource::new(cfg)
}

/// Unit lines of sight ê₁ = −(x+μ, y, z)/r₁ and ê₂ = −(x−1+μ, y, z)/r₂.
pub fn unit_vectors(s: &StateVector, mu: MassRatio) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let m = mu.value();
    let d = primary_distances(s, mu);
    if d.r1 <= crate::constants::PROXIMITY_GUARD || d.r2 <= crate::constants::PROXIMITY_GUARD {
        return Err(NavError::DegenerateDistance {
            r1: d.r1,
            r2: d.r2,
            guard: crate::constants::PROXIMITY_GUARD,
        });
    }
    let e1 = -Vector3::new(s[0] + m, s[1], s[2]) / d.r1;
    let e2 = -Vector3::new(s[0] - 1.0 + m, s[1], s[2]) / d.r2;
    Ok((e1, e2))
}

/// Generates a bearing measurement from the true state and one shaped-noise
/// sample: y_m = (ê₁; ê₂) + blkdiag(W₁(r₁)I₃, W₂(r₂)I₃)·noise, weights in
/// radians with ranges clamped into the box for weight evaluation.
pub fn measure(
    s: &StateVector,
    mu: MassRatio,
    noise: &Vector6<f64>,
    cfg: &NoiseModelConfig,
    bx: &ParamBox,
) -> Result<BearingMeasurement> {
    let (e1, e2) = unit_vectors(s, mu)?;
    let d = primary_distances(s, mu);
    let w1 = noise_weight(d.r1, bx.r1_min, bx.r1_max, cfg.eta_min_rad(), cfg.eta_max_rad());
    let w2 = noise_weight(d.r2, bx.r2_min, bx.r2_max, cfg.eta_min_rad(), cfg.eta_max_rad());
    Ok(BearingMeasurement {
        e1_meas: e1 + w1 * noise.fixed_rows::<3>(0),
        e2_meas: e2 + w2 * noise.fixed_rows::<3>(3),
    })
}

/// Scalar geometry of one line-of-sight pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosGeometry {
    /// c = ê₁·ê₂.
    pub c: f64,
    /// α = ê₁·ê_x.
    pub alpha: f64,
    /// β = ê₂·ê_x.
    pub beta: f64,
    /// Conditioning 1 − c² of the 2×2 closure system.
    pub one_minus_c2: f64,
    /// Closure residual at the reconstructed ranges, DU.
    pub residual: f64,
}

/// Norm of the baseline closure defect ‖ê_x + r₁ê₁ − r₂ê₂‖: zero exactly
/// when (r₁, r₂, ê₁, ê₂) are consistent with the geometry r₂ê₂ − r₁ê₁ = ê_x.
pub fn closure_residual(r1: f64, r2: f64, e1: &Vector3<f64>, e2: &Vector3<f64>) -> f64 {
    (Vector3::x() + r1 * e1 - r2 * e2).norm()
}

/// Reconstructs (r₁, r₂) from measured lines of sight.
///
/// Inputs are renormalized to unit length internally. With c = ê₁·ê₂,
/// α = ê₁·ê_x, β = ê₂·ê_x, the closure system solves to
/// r₁ = (cβ − α)/(1−c²), r₂ = (β − cα)/(1−c²).
pub fn reconstruct_ranges(
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
) -> Result<(f64, f64, LosGeometry)> {
    reconstruct_ranges_with_threshold(e1, e2, COLLINEARITY_THRESHOLD)
}

/// [`reconstruct_ranges`] with an explicit collinearity threshold on 1−c².
pub fn reconstruct_ranges_with_threshold(
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
    threshold: f64,
) -> Result<(f64, f64, LosGeometry)> {
    let n1 = e1.norm();
    let n2 = e2.norm();
    if n1 < 1e-12 || n2 < 1e-12 {
        return Err(NavError::Validation {
            field: "bearing".into(),
            message: "line-of-sight vector has zero norm".into(),
        });
    }
    let u1 = e1 / n1;
    let u2 = e2 / n2;
    let c = u1.dot(&u2);
    let alpha = u1[0];
    let beta = u2[0];
    let one_minus_c2 = 1.0 - c * c;
    if one_minus_c2 < threshold {
        return Err(NavError::NearCollinear {
            one_minus_c2,
            threshold,
        });
    }
    let r1 = (c * beta - alpha) / one_minus_c2;
    let r2 = (beta - c * alpha) / one_minus_c2;
    if r1 <= 0.0 || r2 <= 0.0 {
        return Err(NavError::NonPositiveRange { r1, r2 });
    }
    let residual = closure_residual(r1, r2, &u1, &u2);
    Ok((
        r1,
        r2,
        LosGeometry {
            c,
            alpha,
            beta,
            one_minus_c2,
            residual,
        },
    ))
}
