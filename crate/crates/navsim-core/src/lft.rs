//! Parameter-dependent plant and measurement matrices, parameter-box
//! handling, multiplicative-uncertainty normalization, and generic LFT
//! evaluation.
//!
//! The CR3BP dynamics factor exactly into a linear parameter-varying form
//! ẋ = A(ρ)x + b(ρ) scheduled on ρ = (r₁, r₂); likewise the stacked
//! line-of-sight measurement is exactly C_y(ρ)x + d(ρ). These
//! factorizations are identities given ρ, not linearizations, which the
//! module's invariants exercise directly.

// Matrix constructors are named after the symbols they build (A, C_y, …).
#![allow(non_snake_case)]

use nalgebra::{DMatrix, Matrix6, SMatrix, Vector6};
use serde::{Deserialize, Serialize};

use crate::cr3bp::MassRatio;
use crate::{NavError, Result};

/// Scheduling parameter ρ = (r₁, r₂) in DU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    /// Earth range, DU.
    pub r1: f64,
    /// Moon range, DU.
    pub r2: f64,
}

impl ParamPoint {
    /// Constructs a parameter point; both ranges must be positive.
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r1 > 0.0 && r2.is_finite() && r2 > 0.0) {
            return Err(NavError::Validation {
                field: "rho".into(),
                message: format!("ranges must be positive, got r1={r1}, r2={r2}"),
            });
        }
        Ok(ParamPoint { r1, r2 })
    }
}

/// Operating bounds for the scheduling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub r1_min: f64,
    pub r1_max: f64,
    pub r2_min: f64,
    pub r2_max: f64,
}

impl ParamBox {
    /// Validates 0 < min < max for both parameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.r1_min.is_finite() && self.r1_min > 0.0 && self.r1_min < self.r1_max) {
            return Err(NavError::Validation {
                field: "param_box".into(),
                message: format!(
                    "require 0 < r1_min < r1_max, got [{}, {}]",
                    self.r1_min, self.r1_max
                ),
            });
        }
        if !(self.r2_min.is_finite() && self.r2_min > 0.0 && self.r2_min < self.r2_max) {
            return Err(NavError::Validation {
                field: "param_box".into(),
                message: format!(
                    "require 0 < r2_min < r2_max, got [{}, {}]",
                    self.r2_min, self.r2_max
                ),
            });
        }
        Ok(())
    }

    /// True when ρ lies inside the closed box.
    pub fn contains(&self, rho: ParamPoint) -> bool {
        rho.r1 >= self.r1_min
            && rho.r1 <= self.r1_max
            && rho.r2 >= self.r2_min
            && rho.r2 <= self.r2_max
    }

    /// True when `other` lies inside this box (certificate coverage check).
    pub fn covers(&self, other: &ParamBox) -> bool {
        self.r1_min <= other.r1_min + 1e-12
            && self.r1_max >= other.r1_max - 1e-12
            && self.r2_min <= other.r2_min + 1e-12
            && self.r2_max >= other.r2_max - 1e-12
    }

    /// Clamps ρ into the box; the flag reports whether clamping changed it.
    pub fn clamp(&self, rho: ParamPoint) -> (ParamPoint, bool) {
        let clamped = ParamPoint {
            r1: rho.r1.clamp(self.r1_min, self.r1_max),
            r2: rho.r2.clamp(self.r2_min, self.r2_max),
        };
        let changed = clamped.r1 != rho.r1 || clamped.r2 != rho.r2;
        (clamped, changed)
    }

    /// Box center.
    pub fn center(&self) -> ParamPoint {
        ParamPoint {
            r1: 0.5 * (self.r1_min + self.r1_max),
            r2: 0.5 * (self.r2_min + self.r2_max),
        }
    }
}

impl Default for ParamBox {
    /// Bounds covering the reference NRHO.
    fn default() -> Self {
        let (r1_min, r1_max) = crate::constants::NRHO_R1_BOUNDS;
        let (r2_min, r2_max) = crate::constants::NRHO_R2_BOUNDS;
        ParamBox {
            r1_min,
            r1_max,
            r2_min,
            r2_max,
        }
    }
}

/// Multiplicative-uncertainty coordinates of one parameter:
/// r = r̄ (1 + δ·r̃) with δ ∈ [−1, 1] spanning [min, max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainParam {
    /// Interval midpoint r̄.
    pub nominal: f64,
    /// Relative half-width r̃ = (max − min)/(max + min).
    pub spread: f64,
    /// Normalized coordinate δ = (r − r̄)/(r̄·r̃).
    pub delta: f64,
}

/// Converts a physical parameter value to multiplicative-uncertainty form.
/// Values outside [min, max] (|δ| > 1) are rejected as out of box.
pub fn normalize_param(r: f64, min: f64, max: f64) -> Result<UncertainParam> {
    if !(min < max) {
        return Err(NavError::Validation {
            field: "param bounds".into(),
            message: format!("require min < max, got [{min}, {max}]"),
        });
    }
    let nominal = 0.5 * (min + max);
    let spread = (max - min) / (max + min);
    let delta = (r - nominal) / (nominal * spread);
    if delta.abs() > 1.0 + 1e-9 {
        return Err(NavError::OutOfBox {
            name: "delta",
            value: r,
            min,
            max,
        });
    }
    Ok(UncertainParam {
        nominal,
        spread,
        delta,
    })
}

/// Inverse of [`normalize_param`]: r = r̄ (1 + δ·r̃).
pub fn denormalize(p: &UncertainParam) -> f64 {
    p.nominal * (1.0 + p.delta * p.spread)
}

/// Plant matrix A(ρ): rows 1–3 are [0 I], A₂₁ = diag(a₄₁, a₅₂, a₆₃) with
/// a₄₁ = a₅₂ = (μ−1)/r₁³ − μ/r₂³ + 1 and a₆₃ = (μ−1)/r₁³ − μ/r₂³, and the
/// constant Coriolis block A₂₂.
/// Gravity coefficients shared by `plant_A` and `plant_b`.
///
/// Near the lower r₂ bound, q₂ = μ/r₂³ reaches ~9·10³ while the physical
/// acceleration stays O(10²): A(ρ)s and b(ρ) cancel almost completely, so the
/// affine pair must be built to round *jointly*, not coefficient by
/// coefficient:
///
/// - Both entries consume the same p₁ = (1−μ)/r₁³ and q₂ values, which makes
///   the primitives' roundings common-mode; they cancel in A(ρ)s + b(ρ)
///   exactly like the mathematical terms do, because the scheduling identity
///   r₂² = (x−1+μ)² + y² + z² bounds every in-state coefficient multiplying
///   them by r₂ itself.
/// - a₄₁ = (1 − p₁) − q₂ leaves a single storage rounding e_a, captured
///   exactly with a TwoSum.
/// - b₄ = (1−μ)q₂ − μp₁ + (1−μ)e_a: re-absorbing e_a at the anchor x = 1−μ
///   (the state's x is within r₂ of it, by the identity above) reduces the
///   pair's joint defect on reachable states from two independent storage
///   half-ulps to one, plus O(ulp·r₂) terms. The final fused multiply-add
///   rounds once.
fn gravity_terms(rho: ParamPoint, mu: MassRatio) -> (f64, f64, f64) {
    let m = mu.value();
    let p1 = (1.0 - m) / rho.r1.powi(3);
    let q2 = m / rho.r2.powi(3);
    let u = 1.0 - p1;
    // TwoSum: a41 + e_a == u − q2 exactly.
    let a41 = u - q2;
    let bv = a41 - u;
    let e_a = (u - (a41 - bv)) + (-q2 - bv);
    let a63 = -(p1 + q2);
    let b4 = (1.0 - m).mul_add(q2, -(m.mul_add(p1, -((1.0 - m) * e_a))));
    (a41, a63, b4)
}

pub fn plant_A(rho: ParamPoint, mu: MassRatio) -> Matrix6<f64> {
    let (a41, a63, _) = gravity_terms(rho, mu);
    let mut a = Matrix6::zeros();
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = a41;
    a[(4, 1)] = a41;
    a[(5, 2)] = a63;
    a[(3, 4)] = 2.0;
    a[(4, 3)] = -2.0;
    a
}

/// Affine drift b(ρ): zero except b₄ = μ(1−μ)(1/r₂³ − 1/r₁³).
pub fn plant_b(rho: ParamPoint, mu: MassRatio) -> Vector6<f64> {
    let (_, _, b4) = gravity_terms(rho, mu);
    let mut b = Vector6::zeros();
    b[3] = b4;
    b
}

/// Measurement matrix C_y(ρ) = −[I₃/r₁ 0; I₃/r₂ 0].
pub fn measurement_C(rho: ParamPoint) -> Matrix6<f64> {
    let mut c = Matrix6::zeros();
    for i in 0..3 {
        c[(i, i)] = -1.0 / rho.r1;
        c[(i + 3, i)] = -1.0 / rho.r2;
    }
    c
}

/// Measurement offset d(ρ) = (−μ/r₁, 0, 0, (1−μ)/r₂, 0, 0).
pub fn measurement_d(rho: ParamPoint, mu: MassRatio) -> Vector6<f64> {
    let m = mu.value();
    let mut d = Vector6::zeros();
    d[0] = -m / rho.r1;
    d[3] = (1.0 - m) / rho.r2;
    d
}

/// Range-dependent noise weight: linear from η_min at the interval's lower
/// bound to η_max at its upper bound. `r` is clamped into [r_min, r_max].
pub fn noise_weight(r: f64, r_min: f64, r_max: f64, eta_min: f64, eta_max: f64) -> f64 {
    let rc = r.clamp(r_min, r_max);
    let t = (rc - r_min) / (r_max - r_min);
    eta_min + t * (eta_max - eta_min)
}

/// Measurement noise input D_w(ρ) = [0₆ₓ₃ blkdiag(W₁(r₁)I₃, W₂(r₂)I₃)]
/// with weights in radians; ρ is clamped into the box for evaluation.
pub fn noise_D(rho: ParamPoint, eta_min: f64, eta_max: f64, bx: &ParamBox) -> SMatrix<f64, 6, 9> {
    let w1 = noise_weight(rho.r1, bx.r1_min, bx.r1_max, eta_min, eta_max);
    let w2 = noise_weight(rho.r2, bx.r2_min, bx.r2_max, eta_min, eta_max);
    let mut d = SMatrix::<f64, 6, 9>::zeros();
    for i in 0..3 {
        d[(i, 3 + i)] = w1;
        d[(i + 3, 6 + i)] = w2;
    }
    d
}

/// Disturbance input B_w = [0₃ₓ₃ 0₃ₓ₆; I₃ 0₃ₓ₆]: accelerations enter the
/// velocity rows; the six noise channels do not enter the dynamics.
pub fn input_B_w() -> SMatrix<f64, 6, 9> {
    let mut b = SMatrix::<f64, 6, 9>::zeros();
    for i in 0..3 {
        b[(3 + i, i)] = 1.0;
    }
    b
}

/// Performance output C_z = [I₃ 0₃]: position components of the error.
pub fn output_C_z() -> SMatrix<f64, 3, 6> {
    let mut c = SMatrix::<f64, 3, 6>::zeros();
    for i in 0..3 {
        c[(i, i)] = 1.0;
    }
    c
}

/// Frozen-ρ realization of the full plant/measurement stack.
#[derive(Debug, Clone)]
pub struct PlantMatrices {
    pub a: Matrix6<f64>,
    pub b: Vector6<f64>,
    pub b_w: SMatrix<f64, 6, 9>,
    pub c_y: Matrix6<f64>,
    pub d_w: SMatrix<f64, 6, 9>,
    pub d: Vector6<f64>,
    pub c_z: SMatrix<f64, 3, 6>,
}

/// Assembles every frozen-ρ matrix at once. η weights are in radians.
pub fn plant_matrices(
    rho: ParamPoint,
    mu: MassRatio,
    eta_min: f64,
    eta_max: f64,
    bx: &ParamBox,
) -> PlantMatrices {
    PlantMatrices {
        a: plant_A(rho, mu),
        b: plant_b(rho, mu),
        b_w: input_B_w(),
        c_y: measurement_C(rho),
        d_w: noise_D(rho, eta_min, eta_max, bx),
        d: measurement_d(rho, mu),
        c_z: output_C_z(),
    }
}

/// Partitioned linear fractional transformation block.
#[derive(Debug, Clone)]
pub struct LftBlock {
    pub m11: DMatrix<f64>,
    pub m12: DMatrix<f64>,
    pub m21: DMatrix<f64>,
    pub m22: DMatrix<f64>,
}

/// Upper LFT evaluation M₂₂ + M₂₁ Δ (I − M₁₁ Δ)⁻¹ M₁₂.
///
/// Fails as ill-posed when I − M₁₁Δ has condition number above 1e12.
pub fn lft_eval(m: &LftBlock, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.m11.nrows();
    if m.m11.ncols() != delta.nrows()
        || delta.ncols() != k
        || m.m12.nrows() != k
        || m.m21.ncols() != delta.nrows()
        || m.m22.nrows() != m.m21.nrows()
        || m.m22.ncols() != m.m12.ncols()
    {
        return Err(NavError::Validation {
            field: "lft".into(),
            message: "incompatible LFT partition dimensions".into(),
        });
    }
    let eye = DMatrix::<f64>::identity(k, k);
    let inner = &eye - &m.m11 * delta;
    const COND_LIMIT: f64 = 1e12;
    let svd = inner.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(NavError::IllPosed {
            cond,
            limit: COND_LIMIT,
        });
    }
    let inv = inner
        .try_inverse()
        .ok_or(NavError::IllPosed {
            cond: f64::INFINITY,
            limit: COND_LIMIT,
        })?;
    Ok(&m.m22 + &m.m21 * delta * inv * &m.m12)
}

/// The 1×1 LFT block realizing the multiplicative uncertainty
/// r = r̄ (1 + δ r̃), i.e. lft_eval(block, [δ]) = r.
pub fn multiplicative_block(nominal: f64, spread: f64) -> LftBlock {
    LftBlock {
        m11: DMatrix::zeros(1, 1),
        m12: DMatrix::from_element(1, 1, nominal * spread),
        m21: DMatrix::from_element(1, 1, 1.0),
        m22: DMatrix::from_element(1, 1, nominal),
    }
}

/// Uniform grid over the box with n1 × n2 points, vertices included.
/// Points are ordered row-major in (r1, r2).
pub fn param_grid(bx: &ParamBox, n1: usize, n2: usize) -> Result<Vec<ParamPoint>> {
    if n1 < 2 || n2 < 2 {
        return Err(NavError::Validation {
            field: "grid".into(),
            message: format!("grid densities must be at least 2, got {n1}x{n2}"),
        });
    }
    bx.validate()?;
    let mut pts = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let f1 = i as f64 / (n1 - 1) as f64;
        let r1 = bx.r1_min + f1 * (bx.r1_max - bx.r1_min);
        for j in 0..n2 {
            let f2 = j as f64 / (n2 - 1) as f64;
            let r2 = bx.r2_min + f2 * (bx.r2_max - bx.r2_min);
            pts.push(ParamPoint { r1, r2 });
        }
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cr3bp::{cr3bp_derivative, primary_distances};
    use crate::sensing::unit_vectors;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::{Vector3, Vector6};
    use proptest::prelude::*;

    fn mu() -> MassRatio {
        MassRatio::earth_moon()
    }

    #[test]
    fn plant_a_at_unit_ranges() {
        let a = plant_A(ParamPoint { r1: 1.0, r2: 1.0 }, mu());
        assert_relative_eq!(a[(3, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(a[(4, 1)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(a[(5, 2)], -1.0, max_relative = 1e-15);
        // Kinematic identity block and Coriolis entries.
        assert_eq!(a[(0, 3)], 1.0);
        assert_eq!(a[(3, 4)], 2.0);
        assert_eq!(a[(4, 3)], -2.0);
    }

    #[test]
    fn plant_a_at_box_lower_vertex() {
        let bx = ParamBox::default();
        let a = plant_A(
            ParamPoint {
                r1: bx.r1_min,
                r2: bx.r2_min,
            },
            mu(),
        );
        assert_relative_eq!(a[(3, 0)], -8884.55702984687, max_relative = 1e-12);
        assert_relative_eq!(a[(5, 2)], -8885.55702984687, max_relative = 1e-12);
    }

    #[test]
    fn plant_a_in_plane_entries_equal() {
        let a = plant_A(ParamPoint { r1: 1.07, r2: 0.19 }, mu());
        assert_eq!(a[(3, 0)], a[(4, 1)]);
    }

    #[test]
    fn plant_b_vanishes_for_equal_ranges() {
        // b₄ carries the re-absorbed storage rounding of a₄₁ (see
        // gravity_terms), so the cancellation at r₁ = r₂ is exact only to
        // ~1 ulp of the O(1/r³) gravity coefficients.
        let b = plant_b(ParamPoint { r1: 0.7, r2: 0.7 }, mu());
        for i in 0..6 {
            assert_abs_diff_eq!(b[i], 0.0, epsilon = 5e-16);
        }
    }

    #[test]
    fn plant_b_powers_of_ten() {
        let b = plant_b(ParamPoint { r1: 1.0, r2: 0.1 }, mu());
        assert_relative_eq!(b[3], 11.990945335873615, max_relative = 1e-13);
        for i in [0usize, 1, 2, 4, 5] {
            assert_eq!(b[i], 0.0);
        }
    }

    #[test]
    fn measurement_c_at_unit_ranges() {
        let c = measurement_C(ParamPoint { r1: 1.0, r2: 1.0 });
        for i in 0..3 {
            assert_eq!(c[(i, i)], -1.0);
            assert_eq!(c[(i + 3, i)], -1.0);
            for j in 3..6 {
                assert_eq!(c[(i, j)], 0.0);
                assert_eq!(c[(i + 3, j)], 0.0);
            }
        }
    }

    #[test]
    fn measurement_c_at_box_upper_vertex() {
        let bx = ParamBox::default();
        let c = measurement_C(ParamPoint {
            r1: bx.r1_max,
            r2: bx.r2_max,
        });
        assert_relative_eq!(c[(0, 0)], -0.8999280057595392, max_relative = 1e-14);
        assert_relative_eq!(c[(3, 0)], -4.975124378109452, max_relative = 1e-14);
    }

    #[test]
    fn noise_weight_interpolation_endpoints_and_midpoint() {
        let (lo, hi) = (0.5, 1.5);
        assert_eq!(noise_weight(lo, lo, hi, 2.0, 10.0), 2.0);
        assert_eq!(noise_weight(hi, lo, hi, 2.0, 10.0), 10.0);
        assert_relative_eq!(noise_weight(1.0, lo, hi, 2.0, 10.0), 6.0, max_relative = 1e-15);
        // Out-of-interval values clamp to the endpoints.
        assert_eq!(noise_weight(0.0, lo, hi, 2.0, 10.0), 2.0);
        assert_eq!(noise_weight(9.0, lo, hi, 2.0, 10.0), 10.0);
    }

    #[test]
    fn noise_d_block_structure() {
        let bx = ParamBox::default();
        let d = noise_D(bx.center(), 1.0, 3.0, &bx);
        // Left 6x3 block zero; weights on the two diagonal blocks.
        for i in 0..6 {
            for j in 0..3 {
                assert_eq!(d[(i, j)], 0.0);
            }
        }
        assert_relative_eq!(d[(0, 3)], 2.0, max_relative = 1e-15);
        assert_relative_eq!(d[(3, 6)], 2.0, max_relative = 1e-15);
        assert_eq!(d[(0, 6)], 0.0);
        assert_eq!(d[(3, 3)], 0.0);
    }

    #[test]
    fn input_b_w_structure() {
        let b = input_B_w();
        assert_eq!(b[(3, 0)], 1.0);
        assert_eq!(b[(4, 1)], 1.0);
        assert_eq!(b[(5, 2)], 1.0);
        // Columns 4-9 are all zero.
        for i in 0..6 {
            for j in 3..9 {
                assert_eq!(b[(i, j)], 0.0);
            }
        }
        // B_w (d; n) injects d into the velocity rows only.
        let mut w = nalgebra::SVector::<f64, 9>::zeros();
        w[0] = 0.3;
        w[1] = -0.1;
        w[2] = 0.2;
        w[5] = 9.9; // noise channel, must not couple
        let v = b * w;
        assert_eq!(v, Vector6::new(0.0, 0.0, 0.0, 0.3, -0.1, 0.2));
    }

    #[test]
    fn normalize_param_center_and_endpoints() {
        let p = normalize_param(1.0, 0.5, 1.5).unwrap();
        assert_relative_eq!(p.delta, 0.0, epsilon = 1e-14);
        let hi = normalize_param(1.5, 0.5, 1.5).unwrap();
        assert_relative_eq!(hi.delta, 1.0, epsilon = 1e-12);
        let lo = normalize_param(0.5, 0.5, 1.5).unwrap();
        assert_relative_eq!(lo.delta, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_param_nrho_r1_nominal() {
        let bx = ParamBox::default();
        let p = normalize_param(bx.r1_min, bx.r1_min, bx.r1_max).unwrap();
        assert_relative_eq!(p.nominal, 1.03035, epsilon = 1e-12);
    }

    #[test]
    fn normalize_param_flags_out_of_box() {
        assert!(matches!(
            normalize_param(1.6, 0.5, 1.5),
            Err(NavError::OutOfBox { .. })
        ));
    }

    proptest! {
        #[test]
        fn normalize_round_trip_is_identity(r in 0.9495f64..1.1112f64) {
            let p = normalize_param(r, 0.9495, 1.1112).unwrap();
            let back = denormalize(&p);
            prop_assert!((back - r).abs() <= 1e-14 * r.abs().max(1.0));
        }

        #[test]
        fn multiplicative_block_reproduces_value(delta in -1.0f64..1.0f64) {
            let nominal = 1.03035;
            let spread = 0.07846848158392777;
            let block = multiplicative_block(nominal, spread);
            let d = DMatrix::from_element(1, 1, delta);
            let r = lft_eval(&block, &d).unwrap()[(0, 0)];
            prop_assert!((r - nominal * (1.0 + delta * spread)).abs() <= 1e-14);
        }
    }

    #[test]
    fn lft_eval_zero_delta_gives_m22() {
        let block = LftBlock {
            m11: DMatrix::from_element(2, 2, 0.3),
            m12: DMatrix::identity(2, 2),
            m21: DMatrix::identity(2, 2),
            m22: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        };
        let out = lft_eval(&block, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(out, block.m22);
    }

    #[test]
    fn lft_eval_scalar_feedback() {
        // 0 + 1 * 1 * (1 - 0.5)^-1 * 1 = 2
        let block = LftBlock {
            m11: DMatrix::from_element(1, 1, 0.5),
            m12: DMatrix::from_element(1, 1, 1.0),
            m21: DMatrix::from_element(1, 1, 1.0),
            m22: DMatrix::from_element(1, 1, 0.0),
        };
        let out = lft_eval(&block, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_relative_eq!(out[(0, 0)], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn lft_eval_singular_is_ill_posed() {
        let block = LftBlock {
            m11: DMatrix::from_element(1, 1, 1.0),
            m12: DMatrix::from_element(1, 1, 1.0),
            m21: DMatrix::from_element(1, 1, 1.0),
            m22: DMatrix::from_element(1, 1, 0.0),
        };
        assert!(matches!(
            lft_eval(&block, &DMatrix::from_element(1, 1, 1.0)),
            Err(NavError::IllPosed { .. })
        ));
    }

    #[test]
    fn param_grid_two_by_two_is_vertices() {
        let bx = ParamBox::default();
        let g = param_grid(&bx, 2, 2).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.contains(&ParamPoint {
            r1: bx.r1_min,
            r2: bx.r2_min
        }));
        assert!(g.contains(&ParamPoint {
            r1: bx.r1_max,
            r2: bx.r2_max
        }));
    }

    #[test]
    fn param_grid_three_by_three_contains_center() {
        let bx = ParamBox::default();
        let g = param_grid(&bx, 3, 3).unwrap();
        assert_eq!(g.len(), 9);
        let c = bx.center();
        assert!(g
            .iter()
            .any(|p| (p.r1 - c.r1).abs() < 1e-15 && (p.r2 - c.r2).abs() < 1e-15));
    }

    #[test]
    fn param_grid_spacing_five_points() {
        let bx = ParamBox::default();
        let g = param_grid(&bx, 5, 2).unwrap();
        let spacing = (bx.r1_max - bx.r1_min) / 4.0;
        assert_relative_eq!(g[2].r1 - g[0].r1, spacing, max_relative = 1e-12);
    }

    #[test]
    fn param_grid_rejects_degenerate_density() {
        assert!(param_grid(&ParamBox::default(), 1, 3).is_err());
    }

    /// Pseudo-random states whose ρ lies in the default box.
    fn random_box_states(n: usize, seed: u64) -> Vec<Vector6<f64>> {
        use rand::{Rng, SeedableRng};
        let bx = ParamBox::default();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let s = Vector6::new(
                rng.gen_range(0.8..1.2),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let d = primary_distances(&s, mu());
            if bx.contains(ParamPoint { r1: d.r1, r2: d.r2 }) {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn lpv_factorization_is_exact() {
        for s in random_box_states(100, 11) {
            let d = primary_distances(&s, mu());
            let rho = ParamPoint { r1: d.r1, r2: d.r2 };
            let lhs = cr3bp_derivative(&s, mu(), &Vector3::zeros()).unwrap();
            let rhs = plant_A(rho, mu()) * s + plant_b(rho, mu());
            assert!((lhs - rhs).amax() <= 1e-12, "residual {}", (lhs - rhs).amax());
        }
    }

    #[test]
    fn measurement_factorization_is_exact() {
        for s in random_box_states(100, 13) {
            let d = primary_distances(&s, mu());
            let rho = ParamPoint { r1: d.r1, r2: d.r2 };
            let (e1, e2) = unit_vectors(&s, mu()).unwrap();
            let mut stacked = Vector6::zeros();
            stacked.fixed_rows_mut::<3>(0).copy_from(&e1);
            stacked.fixed_rows_mut::<3>(3).copy_from(&e2);
            let model = measurement_C(rho) * s + measurement_d(rho, mu());
            assert!((stacked - model).amax() <= 1e-12);
        }
    }

    #[test]
    fn lpv_consistency_at_nrho_state() {
        let s = Vector6::from_column_slice(&crate::constants::NRHO_INITIAL_STATE);
        let d = primary_distances(&s, mu());
        let rho = ParamPoint { r1: d.r1, r2: d.r2 };
        let lhs = cr3bp_derivative(&s, mu(), &Vector3::zeros()).unwrap();
        let rhs = plant_A(rho, mu()) * s + plant_b(rho, mu());
        assert!((lhs - rhs).amax() <= 1e-13);
    }
}
