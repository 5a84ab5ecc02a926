//! Scenario configuration: the JSON schema tying together the dynamics,
//! noise, disturbance, and scheduling settings for one simulated mission,
//! plus the random disturbance sources.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{
    DEFAULT_DISTURBANCE_AMPLITUDE, DEFAULT_DURATION_TU, EARTH_MOON_MU, NRHO_INITIAL_ESTIMATE_ERROR,
    NRHO_INITIAL_STATE,
};
use crate::cr3bp::{DisturbanceSource, IntegratorConfig, MassRatio, StateVector};
use crate::lft::ParamBox;
use crate::observer::ParamSchedulePolicy;
use crate::sensing::NoiseModelConfig;
use crate::{NavError, Result};

/// Distribution family for the acceleration disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    /// Components uniform in [−amplitude, +amplitude].
    Uniform,
    /// Components Gaussian with standard deviation `amplitude`.
    Gaussian,
}

/// Acceleration-disturbance configuration. One fresh draw is made per
/// integrator macro-step and held across the step (zero-order hold), which
/// realizes the white-disturbance model at the resolution the fixed-step
/// solver can represent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    pub distribution: DisturbanceKind,
    /// Normalized acceleration scale (DU/TU²).
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig {
            distribution: DisturbanceKind::Uniform,
            amplitude: DEFAULT_DISTURBANCE_AMPLITUDE,
            seed: 0,
        }
    }
}

impl DisturbanceConfig {
    /// Validates amplitude ≥ 0 and finite.
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(NavError::Validation {
                field: "disturbance.amplitude".into(),
                message: format!("must be finite and non-negative, got {}", self.amplitude),
            });
        }
        Ok(())
    }

    /// Builds the source with the configured seed.
    pub fn source(&self) -> RandomDisturbance {
        self.source_with_seed(self.seed)
    }

    /// Builds the source with an explicit seed (used by Monte Carlo runs).
    pub fn source_with_seed(&self, seed: u64) -> RandomDisturbance {
        RandomDisturbance {
            kind: self.distribution,
            amplitude: self.amplitude,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }
}

/// Seeded random acceleration source; draws a fresh vector on every query.
#[derive(Debug, Clone)]
pub struct RandomDisturbance {
    kind: DisturbanceKind,
    amplitude: f64,
    rng: ChaCha12Rng,
}

impl DisturbanceSource for RandomDisturbance {
    fn sample(&mut self, _t: f64) -> Vector3<f64> {
        let a = self.amplitude;
        match self.kind {
            DisturbanceKind::Uniform => Vector3::new(
                self.rng.gen_range(-a..=a),
                self.rng.gen_range(-a..=a),
                self.rng.gen_range(-a..=a),
            ),
            DisturbanceKind::Gaussian => {
                let mut v = Vector3::zeros();
                for i in 0..3 {
                    let xi: f64 = StandardNormal.sample(&mut self.rng);
                    v[i] = a * xi;
                }
                v
            }
        }
    }
}

/// A complete simulation scenario. Every field has a default matching the
/// reference NRHO mission, so `{}` is a valid scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Mass ratio of the primary pair.
    pub mu: f64,
    /// Truth state at t = 0 (rotating frame, normalized units).
    pub initial_state: [f64; 6],
    /// Initial estimation error x̃(0) = x(0) − x̂(0).
    pub initial_estimate_error: [f64; 6],
    /// Simulation span in TU.
    pub duration_tu: f64,
    pub integrator: IntegratorConfig,
    /// Range box the schedule clamps into; must be covered by the gain's
    /// certified box.
    pub param_box: ParamBox,
    pub noise: NoiseModelConfig,
    pub disturbance: DisturbanceConfig,
    pub schedule_policy: ParamSchedulePolicy,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            mu: EARTH_MOON_MU,
            initial_state: NRHO_INITIAL_STATE,
            initial_estimate_error: NRHO_INITIAL_ESTIMATE_ERROR,
            duration_tu: DEFAULT_DURATION_TU,
            integrator: IntegratorConfig::default_rk4(),
            param_box: ParamBox::default(),
            noise: NoiseModelConfig::default(),
            disturbance: DisturbanceConfig::default(),
            schedule_policy: ParamSchedulePolicy::default(),
        }
    }
}

impl Scenario {
    /// Validates every field and sub-config.
    pub fn validate(&self) -> Result<()> {
        MassRatio::new(self.mu)?;
        for (name, arr) in [
            ("initial_state", &self.initial_state),
            ("initial_estimate_error", &self.initial_estimate_error),
        ] {
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(NavError::Validation {
                    field: name.into(),
                    message: "all components must be finite".into(),
                });
            }
        }
        if !(self.duration_tu.is_finite() && self.duration_tu > 0.0) {
            return Err(NavError::Validation {
                field: "duration_tu".into(),
                message: format!("must be positive, got {}", self.duration_tu),
            });
        }
        self.integrator.validate()?;
        self.param_box.validate()?;
        self.noise.validate()?;
        self.disturbance.validate()?;
        let th = self.schedule_policy.collinearity_threshold;
        if !(th.is_finite() && th > 0.0 && th < 1.0) {
            return Err(NavError::Validation {
                field: "schedule_policy.collinearity_threshold".into(),
                message: format!("must lie in (0, 1), got {th}"),
            });
        }
        Ok(())
    }

    /// The validated mass ratio.
    pub fn mass_ratio(&self) -> Result<MassRatio> {
        MassRatio::new(self.mu)
    }

    /// Truth state at t = 0.
    pub fn initial_state_vector(&self) -> StateVector {
        StateVector::from_column_slice(&self.initial_state)
    }

    /// Estimate at t = 0, x̂(0) = x(0) − x̃(0), so the error series starts
    /// exactly at the configured x̃(0).
    pub fn initial_estimate_vector(&self) -> StateVector {
        self.initial_state_vector() - StateVector::from_column_slice(&self.initial_estimate_error)
    }
}

/// Parses a scenario from a JSON string (strict: unknown keys rejected) and
/// validates it.
pub fn scenario_from_json(s: &str) -> Result<Scenario> {
    let sc: Scenario =
        serde_json::from_str(s).map_err(|e| NavError::Parse(format!("scenario: {e}")))?;
    sc.validate()?;
    Ok(sc)
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    scenario_from_json(&text)
}
