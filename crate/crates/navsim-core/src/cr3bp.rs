//! Normalized circular restricted three-body problem dynamics.
//!
//! In the rotating frame the primaries sit at (−μ, 0, 0) and (1−μ, 0, 0).
//! States are ordered (x, y, z, ẋ, ẏ, ż) in DU and DU/TU. All operations
//! are pure; propagation takes an explicit per-step disturbance source.

use nalgebra::{Vector3, Vector6};

use crate::constants::PROXIMITY_GUARD;
use crate::{NavError, Result};

/// Mass ratio μ = m₂/(m₁+m₂) of the two primaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRatio(f64);

impl MassRatio {
    /// Validates 0 < μ < 0.5 (the smaller primary is body 2).
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0 && mu < 0.5) {
            return Err(NavError::Validation {
                field: "mu".into(),
                message: format!("mass ratio must satisfy 0 < mu < 0.5, got {mu}"),
            });
        }
        Ok(MassRatio(mu))
    }

    /// Earth–Moon default.
    pub fn earth_moon() -> Self {
        MassRatio(crate::constants::EARTH_MOON_MU)
    }

    /// The underlying scalar.
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Six-dimensional state (x, y, z, ẋ, ẏ, ż) in normalized units.
pub type StateVector = Vector6<f64>;

/// Distances from the spacecraft to each primary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimaryDistances {
    /// Distance to the larger primary (Earth), DU.
    pub r1: f64,
    /// Distance to the smaller primary (Moon), DU.
    pub r2: f64,
}

/// Distances r₁ = ‖(x+μ, y, z)‖ and r₂ = ‖(x−1+μ, y, z)‖.
pub fn primary_distances(s: &StateVector, mu: MassRatio) -> PrimaryDistances {
    let m = mu.value();
    let r1 = ((s[0] + m).powi(2) + s[1].powi(2) + s[2].powi(2)).sqrt();
    let r2 = ((s[0] - 1.0 + m).powi(2) + s[1].powi(2) + s[2].powi(2)).sqrt();
    PrimaryDistances { r1, r2 }
}

fn guarded_distances(s: &StateVector, mu: MassRatio) -> Result<PrimaryDistances> {
    let d = primary_distances(s, mu);
    if d.r1 <= PROXIMITY_GUARD || d.r2 <= PROXIMITY_GUARD {
        return Err(NavError::DegenerateDistance {
            r1: d.r1,
            r2: d.r2,
            guard: PROXIMITY_GUARD,
        });
    }
    Ok(d)
}

/// Effective potential U = ½(x²+y²) + (1−μ)/r₁ + μ/r₂.
pub fn effective_potential(s: &StateVector, mu: MassRatio) -> Result<f64> {
    let m = mu.value();
    let d = guarded_distances(s, mu)?;
    Ok(0.5 * (s[0] * s[0] + s[1] * s[1]) + (1.0 - m) / d.r1 + m / d.r2)
}

/// Gradient (∂U/∂x, ∂U/∂y, ∂U/∂z) of the effective potential.
pub fn potential_gradient(s: &StateVector, mu: MassRatio) -> Result<Vector3<f64>> {
    let m = mu.value();
    let d = guarded_distances(s, mu)?;
    let r1c = d.r1.powi(3);
    let r2c = d.r2.powi(3);
    let (x, y, z) = (s[0], s[1], s[2]);
    Ok(Vector3::new(
        x - (1.0 - m) * (x + m) / r1c - m * (x - (1.0 - m)) / r2c,
        y - (1.0 - m) * y / r1c - m * y / r2c,
        -(1.0 - m) * z / r1c - m * z / r2c,
    ))
}

/// Equations of motion with an additive acceleration disturbance d:
/// (ẋ, ẏ, ż, 2ẏ + ∂U/∂x + dₓ, −2ẋ + ∂U/∂y + d_y, ∂U/∂z + d_z).
pub fn cr3bp_derivative(s: &StateVector, mu: MassRatio, d: &Vector3<f64>) -> Result<StateVector> {
    let g = potential_gradient(s, mu)?;
    Ok(Vector6::new(
        s[3],
        s[4],
        s[5],
        2.0 * s[4] + g[0] + d[0],
        -2.0 * s[3] + g[1] + d[1],
        g[2] + d[2],
    ))
}

/// Jacobi constant C = 2U − (ẋ²+ẏ²+ż²), conserved by the unperturbed flow.
pub fn jacobi_constant(s: &StateVector, mu: MassRatio) -> Result<f64> {
    let u = effective_potential(s, mu)?;
    Ok(2.0 * u - (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]))
}

/// Locates a collinear equilibrium by bisecting ∂U/∂x on [x_lo, x_hi]
/// (y = z = 0). The bracket must straddle a sign change.
pub fn collinear_equilibrium(mu: MassRatio, x_lo: f64, x_hi: f64) -> Result<f64> {
    let fx = |x: f64| -> Result<f64> {
        let s = Vector6::new(x, 0.0, 0.0, 0.0, 0.0, 0.0);
        Ok(potential_gradient(&s, mu)?[0])
    };
    let (mut lo, mut hi) = (x_lo, x_hi);
    let (mut flo, fhi) = (fx(lo)?, fx(hi)?);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(NavError::Validation {
            field: "bracket".into(),
            message: format!("no sign change of dU/dx on [{x_lo}, {x_hi}]"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = fx(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Time-indexed acceleration disturbance, sampled once per integrator
/// macro-step and held constant across the step (zero-order hold).
pub trait DisturbanceSource {
    /// Disturbance acceleration for the step starting at time `t`.
    fn sample(&mut self, t: f64) -> Vector3<f64>;
}

/// The zero disturbance.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroDisturbance;

impl DisturbanceSource for ZeroDisturbance {
    fn sample(&mut self, _t: f64) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Numerical integration method and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegratorConfig {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 {
        /// Step size in TU.
        #[serde(default = "default_rk4_step")]
        step: f64,
    },
    /// Adaptive Runge–Kutta–Fehlberg 4(5).
    Rkf45 {
        /// Absolute tolerance per component.
        #[serde(default = "default_rkf45_tol")]
        abs_tol: f64,
        /// Relative tolerance per component.
        #[serde(default = "default_rkf45_tol")]
        rel_tol: f64,
        /// Largest step the controller may take, TU.
        #[serde(default = "default_max_step")]
        max_step: f64,
    },
}

fn default_rk4_step() -> f64 {
    crate::constants::DEFAULT_RK4_STEP
}
fn default_rkf45_tol() -> f64 {
    crate::constants::DEFAULT_RKF45_TOL
}
fn default_max_step() -> f64 {
    0.1
}

impl IntegratorConfig {
    /// Default fixed-step configuration for coupled truth/observer runs.
    pub fn default_rk4() -> Self {
        IntegratorConfig::Rk4 {
            step: default_rk4_step(),
        }
    }

    /// Default adaptive configuration for truth propagation.
    pub fn default_rkf45() -> Self {
        IntegratorConfig::Rkf45 {
            abs_tol: default_rkf45_tol(),
            rel_tol: default_rkf45_tol(),
            max_step: default_max_step(),
        }
    }

    /// Validates positivity of steps and tolerances.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(NavError::Validation {
                field: format!("integrator.{field}"),
                message,
            })
        };
        match *self {
            IntegratorConfig::Rk4 { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return bad("step", format!("step must be positive, got {step}"));
                }
            }
            IntegratorConfig::Rkf45 {
                abs_tol,
                rel_tol,
                max_step,
            } => {
                if !(abs_tol.is_finite() && abs_tol > 0.0) {
                    return bad("abs_tol", format!("must be positive, got {abs_tol}"));
                }
                if !(rel_tol.is_finite() && rel_tol > 0.0) {
                    return bad("rel_tol", format!("must be positive, got {rel_tol}"));
                }
                if !(max_step.is_finite() && max_step > 0.0) {
                    return bad("max_step", format!("must be positive, got {max_step}"));
                }
            }
        }
        Ok(())
    }
}

/// A sampled trajectory: `times` strictly increasing, one state per sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sample times, TU.
    pub times: Vec<f64>,
    /// States aligned with `times`.
    pub states: Vec<StateVector>,
}

/// One classical RK4 step of ds/dt = f(t, s).
pub fn rk4_step<F>(f: &mut F, t: f64, s: &StateVector, dt: f64) -> Result<StateVector>
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    let k1 = f(t, s)?;
    let k2 = f(t + 0.5 * dt, &(s + 0.5 * dt * k1))?;
    let k3 = f(t + 0.5 * dt, &(s + 0.5 * dt * k2))?;
    let k4 = f(t + dt, &(s + dt * k3))?;
    Ok(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

// Runge–Kutta–Fehlberg 4(5) tableau.
const RKF_A: [[f64; 5]; 5] = [
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const RKF_C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const RKF_B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const RKF_B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];

/// One RKF45 trial step: returns the fifth-order solution and the scaled
/// error norm of the embedded fourth-order difference.
fn rkf45_trial<F>(
    f: &mut F,
    t: f64,
    s: &StateVector,
    h: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(StateVector, f64)>
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    let mut k = [StateVector::zeros(); 6];
    k[0] = f(t, s)?;
    for i in 1..6 {
        let mut si = *s;
        for (j, kj) in k.iter().enumerate().take(i) {
            let a = RKF_A[i - 1][j];
            if a != 0.0 {
                si += h * a * kj;
            }
        }
        k[i] = f(t + RKF_C[i] * h, &si)?;
    }
    let mut s5 = *s;
    let mut s4 = *s;
    for (i, ki) in k.iter().enumerate() {
        s5 += h * RKF_B5[i] * ki;
        s4 += h * RKF_B4[i] * ki;
    }
    let mut err2 = 0.0;
    for i in 0..6 {
        let scale = abs_tol + rel_tol * s[i].abs().max(s5[i].abs());
        let e = (s5[i] - s4[i]) / scale;
        err2 += e * e;
    }
    Ok((s5, (err2 / 6.0).sqrt()))
}

/// Integrates the disturbed CR3BP over `t_span`, sampling the trajectory at
/// every accepted step. The disturbance is held constant across each
/// macro-step. States within the proximity guard of a primary are rejected.
pub fn propagate(
    s0: &StateVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    disturbance: &mut dyn DisturbanceSource,
    mu: MassRatio,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(NavError::Validation {
            field: "t_span".into(),
            message: format!("time span must be increasing, got ({t0}, {t1})"),
        });
    }
    cfg.validate()?;
    guarded_distances(s0, mu)?;

    let mut times = vec![t0];
    let mut states = vec![*s0];
    if t1 == t0 {
        return Ok(Trajectory { times, states });
    }

    match *cfg {
        IntegratorConfig::Rk4 { step } => {
            // Integer-indexed grid: avoids float accumulation deciding the
            // number of rows. A shortened final step lands exactly on t1.
            let n_full = ((t1 - t0) / step + 1e-9).floor() as usize;
            let mut s = *s0;
            let mut push = |t_next: f64,
                            t_cur: f64,
                            h: f64,
                            s: &mut StateVector,
                            dist: &mut dyn DisturbanceSource|
             -> Result<()> {
                let d = dist.sample(t_cur);
                let mut f =
                    |_tt: f64, ss: &StateVector| -> Result<StateVector> { cr3bp_derivative(ss, mu, &d) };
                *s = rk4_step(&mut f, t_cur, s, h)?;
                guarded_distances(s, mu)?;
                times.push(t_next);
                states.push(*s);
                Ok(())
            };
            for k in 1..=n_full {
                let t_cur = t0 + (k - 1) as f64 * step;
                push(t0 + k as f64 * step, t_cur, step, &mut s, disturbance)?;
            }
            let t_reached = t0 + n_full as f64 * step;
            let remainder = t1 - t_reached;
            if remainder > 1e-9 * step {
                push(t1, t_reached, remainder, &mut s, disturbance)?;
            } else if let Some(last) = times.last_mut() {
                *last = t1;
            }
        }
        IntegratorConfig::Rkf45 {
            abs_tol,
            rel_tol,
            max_step,
        } => {
            let mut t = t0;
            let mut s = *s0;
            let mut h = max_step.min(0.25 * (t1 - t0)).min(1e-2);
            let h_min = 1e-14 * (t1 - t0).max(1.0);
            while t < t1 {
                h = h.min(t1 - t);
                let d = disturbance.sample(t);
                let mut f =
                    |_tt: f64, ss: &StateVector| -> Result<StateVector> { cr3bp_derivative(ss, mu, &d) };
                let (s5, err) = rkf45_trial(&mut f, t, &s, h, abs_tol, rel_tol)?;
                if err <= 1.0 {
                    t = if (t1 - t - h).abs() < 1e-14 * t1.abs().max(1.0) {
                        t1
                    } else {
                        t + h
                    };
                    s = s5;
                    guarded_distances(&s, mu)?;
                    times.push(t);
                    states.push(s);
                }
                let factor = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h = (h * factor).min(max_step);
                if h < h_min {
                    return Err(NavError::StepFailure {
                        t,
                        reason: format!("step size {h:.3e} fell below minimum {h_min:.3e}"),
                    });
                }
            }
        }
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector6;

    const MU: f64 = 0.012150585;

    fn mu() -> MassRatio {
        MassRatio::earth_moon()
    }

    fn nrho_state() -> StateVector {
        Vector6::from_column_slice(&crate::constants::NRHO_INITIAL_STATE)
    }

    #[test]
    fn mass_ratio_rejects_out_of_range() {
        assert!(MassRatio::new(0.0).is_err());
        assert!(MassRatio::new(0.5).is_err());
        assert!(MassRatio::new(-0.1).is_err());
        assert!(MassRatio::new(f64::NAN).is_err());
        assert!(MassRatio::new(0.012150585).is_ok());
    }

    #[test]
    fn distances_at_earth_center() {
        let s = Vector6::new(-MU, 0.0, 0.0, 0.0, 0.0, 0.0);
        let d = primary_distances(&s, mu());
        assert_eq!(d.r1, 0.0);
        assert_relative_eq!(d.r2, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn distances_on_axis_midpoint() {
        let s = Vector6::new(0.5, 0.0, 0.0, 0.0, 0.0, 0.0);
        let d = primary_distances(&s, mu());
        assert_relative_eq!(d.r1, 0.512150585, max_relative = 1e-15);
        assert_relative_eq!(d.r2, 0.487849415, max_relative = 1e-15);
    }

    #[test]
    fn distances_at_nrho_state() {
        // Independent vector-norm evaluation.
        let d = primary_distances(&nrho_state(), mu());
        assert_relative_eq!(d.r1, 1.058269843468709, max_relative = 1e-14);
        assert_relative_eq!(d.r2, 0.1913951712956354, max_relative = 1e-14);
    }

    #[test]
    fn potential_on_axis_value() {
        let s = Vector6::new(0.5, 0.0, 0.0, 0.0, 0.0, 0.0);
        let u = effective_potential(&s, mu()).unwrap();
        assert_relative_eq!(u, 2.078732524340849, max_relative = 1e-14);
    }

    #[test]
    fn potential_symmetric_in_z() {
        let sp = Vector6::new(0.2, -0.3, 0.7, 0.0, 0.0, 0.0);
        let sm = Vector6::new(0.2, -0.3, -0.7, 0.0, 0.0, 0.0);
        let up = effective_potential(&sp, mu()).unwrap();
        let um = effective_potential(&sm, mu()).unwrap();
        assert_eq!(up, um);
    }

    #[test]
    fn potential_far_field_is_centrifugal() {
        let x = 1.0e6;
        let s = Vector6::new(x, 0.0, 0.0, 0.0, 0.0, 0.0);
        let u = effective_potential(&s, mu()).unwrap();
        assert_relative_eq!(u, 0.5 * x * x, max_relative = 1e-5);
    }

    #[test]
    fn potential_rejects_primary_center() {
        let s = Vector6::new(-MU, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            effective_potential(&s, mu()),
            Err(NavError::DegenerateDistance { .. })
        ));
    }

    #[test]
    fn gradient_vanishes_off_plane_terms_on_axis() {
        let s = Vector6::new(0.37, 0.0, 0.0, 0.1, 0.2, 0.3);
        let g = potential_gradient(&s, mu()).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
    }

    /// Central finite difference of the effective potential.
    fn fd_gradient(s: &StateVector, h: f64) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let mut sp = *s;
            let mut sm = *s;
            sp[i] += h;
            sm[i] -= h;
            g[i] = (effective_potential(&sp, mu()).unwrap()
                - effective_potential(&sm, mu()).unwrap())
                / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for s in [
            Vector6::new(0.5, 0.1, 0.05, 0.0, 0.0, 0.0),
            nrho_state(),
            Vector6::new(-0.3, 0.8, -0.2, 0.0, 0.0, 0.0),
        ] {
            let g = potential_gradient(&s, mu()).unwrap();
            let gfd = fd_gradient(&s, 1e-6);
            for i in 0..3 {
                assert!(
                    (g[i] - gfd[i]).abs() < 1e-6,
                    "component {i}: {} vs {}",
                    g[i],
                    gfd[i]
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_random_box_states() {
        // 100 pseudo-random states in the NRHO operating region.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s = Vector6::new(
                rng.gen_range(0.85..1.15),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                0.0,
                0.0,
                0.0,
            );
            let g = potential_gradient(&s, mu()).unwrap();
            let gfd = fd_gradient(&s, 1e-6);
            for i in 0..3 {
                assert!((g[i] - gfd[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn derivative_kinematics_zero_velocity() {
        let s = Vector6::new(0.4, 0.2, -0.1, 0.0, 0.0, 0.0);
        let ds = cr3bp_derivative(&s, mu(), &Vector3::zeros()).unwrap();
        assert_eq!(ds[0], 0.0);
        assert_eq!(ds[1], 0.0);
        assert_eq!(ds[2], 0.0);
    }

    #[test]
    fn derivative_at_nrho_state() {
        let ds = cr3bp_derivative(&nrho_state(), mu(), &Vector3::zeros()).unwrap();
        let expected = [
            0.0,
            -0.11898,
            0.0,
            -0.1488503326477557,
            0.0,
            0.47944575708060155,
        ];
        for i in 0..6 {
            assert_relative_eq!(ds[i], expected[i], epsilon = 1e-14, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivative_vanishes_at_libration_point() {
        let x_l1 = collinear_equilibrium(mu(), 0.5, 1.0 - MU - 1e-4).unwrap();
        let s = Vector6::new(x_l1, 0.0, 0.0, 0.0, 0.0, 0.0);
        let ds = cr3bp_derivative(&s, mu(), &Vector3::zeros()).unwrap();
        assert!(ds.norm() < 1e-10, "derivative at L1: {ds}");
        // Region check against the classic Earth-Moon L1 location.
        assert_relative_eq!(x_l1, 0.8369151287720266, max_relative = 1e-10);
    }

    #[test]
    fn disturbance_enters_velocity_rows() {
        let s = nrho_state();
        let d = Vector3::new(0.01, -0.02, 0.03);
        let with = cr3bp_derivative(&s, mu(), &d).unwrap();
        let without = cr3bp_derivative(&s, mu(), &Vector3::zeros()).unwrap();
        let diff = with - without;
        assert_eq!(diff.fixed_rows::<3>(0), Vector3::zeros());
        assert_relative_eq!(diff[3], 0.01, max_relative = 1e-12);
        assert_relative_eq!(diff[4], -0.02, max_relative = 1e-12);
        assert_relative_eq!(diff[5], 0.03, max_relative = 1e-12);
    }

    #[test]
    fn jacobi_zero_velocity_is_twice_potential() {
        let s = Vector6::new(0.5, 0.2, 0.1, 0.0, 0.0, 0.0);
        let c = jacobi_constant(&s, mu()).unwrap();
        let u = effective_potential(&s, mu()).unwrap();
        assert_eq!(c, 2.0 * u);
    }

    #[test]
    fn jacobi_at_nrho_state() {
        let c = jacobi_constant(&nrho_state(), mu()).unwrap();
        assert_relative_eq!(c, 3.039598446876527, max_relative = 1e-14);
    }

    #[test]
    fn propagate_zero_span_returns_single_sample() {
        let s0 = nrho_state();
        let traj = propagate(
            &s0,
            (0.0, 0.0),
            &IntegratorConfig::default_rk4(),
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        assert_eq!(traj.times.len(), 1);
        assert_eq!(traj.states[0], s0);
    }

    #[test]
    fn propagate_stationary_at_libration_point() {
        let x_l1 = collinear_equilibrium(mu(), 0.5, 1.0 - MU - 1e-4).unwrap();
        let s0 = Vector6::new(x_l1, 0.0, 0.0, 0.0, 0.0, 0.0);
        let traj = propagate(
            &s0,
            (0.0, 1.0),
            &IntegratorConfig::default_rkf45(),
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        for s in &traj.states {
            assert!((s - s0).norm() < 1e-9, "drift {}", (s - s0).norm());
        }
    }

    #[test]
    fn propagate_conserves_jacobi_constant() {
        let s0 = nrho_state();
        let traj = propagate(
            &s0,
            (0.0, 3.0),
            &IntegratorConfig::default_rkf45(),
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        let c0 = jacobi_constant(&s0, mu()).unwrap();
        let mut worst = 0.0f64;
        for s in &traj.states {
            let c = jacobi_constant(s, mu()).unwrap();
            worst = worst.max(((c - c0) / c0).abs());
        }
        assert!(worst <= 1e-9, "relative Jacobi drift {worst:.3e}");
        assert_eq!(*traj.times.last().unwrap(), 3.0);
    }

    #[test]
    fn propagate_rk4_lands_on_final_time() {
        let s0 = nrho_state();
        let traj = propagate(
            &s0,
            (0.0, 0.25),
            &IntegratorConfig::Rk4 { step: 0.1 },
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        assert_eq!(*traj.times.last().unwrap(), 0.25);
        assert_eq!(traj.times.len(), 4); // 0, 0.1, 0.2, 0.25
    }

    #[test]
    fn propagate_preserves_planar_symmetry() {
        // Start in-plane; z and vz must stay identically zero.
        let s0 = Vector6::new(0.83, 0.0, 0.0, 0.0, 0.13, 0.0);
        let traj = propagate(
            &s0,
            (0.0, 2.0),
            &IntegratorConfig::default_rkf45(),
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        for s in &traj.states {
            assert_eq!(s[2], 0.0);
            assert_eq!(s[5], 0.0);
        }
    }

    #[test]
    fn propagate_rejects_states_inside_proximity_guard() {
        // Starting within the guard distance of the Moon is rejected up front.
        let s0 = Vector6::new(1.0 - MU + 1e-7, 0.0, 0.0, 0.0, 0.0, 0.0);
        let res = propagate(
            &s0,
            (0.0, 1.0),
            &IntegratorConfig::Rk4 { step: 1e-3 },
            &mut ZeroDisturbance,
            mu(),
        );
        assert!(matches!(res, Err(NavError::DegenerateDistance { .. })));
    }

    #[test]
    fn trajectory_times_strictly_increase() {
        let traj = propagate(
            &nrho_state(),
            (0.0, 0.5),
            &IntegratorConfig::default_rkf45(),
            &mut ZeroDisturbance,
            mu(),
        )
        .unwrap();
        assert_eq!(traj.times.len(), traj.states.len());
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
