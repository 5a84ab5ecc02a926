//! H∞ analysis and observer-gain synthesis.
//!
//! The estimation-error dynamics for a gain L are
//! ė = (A(ρ) + L·C_y(ρ))·e + (B_w + L·D_w(ρ))·w,  z = C_z·e,
//! with w stacking acceleration disturbance and the two bearing-noise
//! groups. The gain is synthesized by direct search: minimize the worst
//! closed-loop H∞ norm over a coarse parameter grid subject to a spectral-
//! abscissa floor, then certify the result on a denser validation grid.
//!
//! The H∞ norm itself is computed by Hamiltonian bisection: γ exceeds the
//! norm of a stable G = (A, B, C) iff the Hamiltonian
//! H(γ) = [A, BBᵀ/γ²; −CᵀC, −Aᵀ] has no purely imaginary eigenvalue. A
//! frequency sweep supplies the initial lower bound.

use nalgebra::{Complex, DMatrix, Matrix3, Matrix6, SMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cr3bp::MassRatio;
use crate::lft::{
    input_B_w, measurement_C, noise_D, output_C_z, param_grid, plant_A, ParamBox, ParamPoint,
};
use crate::{NavError, Result};

/// Everything needed to instantiate the uncertain error dynamics at a
/// parameter point: the mass ratio, the range box, and the bearing-noise
/// weight endpoints in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantContext {
    pub mu: MassRatio,
    pub bounds: ParamBox,
    pub eta_min_rad: f64,
    pub eta_max_rad: f64,
}

impl PlantContext {
    /// Validates the box and noise weights.
    pub fn new(mu: MassRatio, bounds: ParamBox, eta_min_rad: f64, eta_max_rad: f64) -> Result<Self> {
        bounds.validate()?;
        if !(eta_min_rad.is_finite() && eta_min_rad >= 0.0 && eta_max_rad >= eta_min_rad) {
            return Err(NavError::Validation {
                field: "eta".into(),
                message: format!("need 0 <= eta_min <= eta_max, got ({eta_min_rad}, {eta_max_rad}) rad"),
            });
        }
        Ok(PlantContext {
            mu,
            bounds,
            eta_min_rad,
            eta_max_rad,
        })
    }

    /// Earth–Moon system, reference range box, default noise weights.
    pub fn nrho_default() -> Self {
        use crate::constants::{ARCSEC_TO_RAD, DEFAULT_ETA_MAX_ARCSEC, DEFAULT_ETA_MIN_ARCSEC};
        PlantContext {
            mu: MassRatio::earth_moon(),
            bounds: ParamBox::default(),
            eta_min_rad: DEFAULT_ETA_MIN_ARCSEC * ARCSEC_TO_RAD,
            eta_max_rad: DEFAULT_ETA_MAX_ARCSEC * ARCSEC_TO_RAD,
        }
    }
}

/// Closed-loop error-dynamics matrices (A + L·C_y, B_w + L·D_w) at ρ.
pub fn error_system(
    l: &Matrix6<f64>,
    rho: ParamPoint,
    ctx: &PlantContext,
) -> (Matrix6<f64>, SMatrix<f64, 6, 9>) {
    let a = plant_A(rho, ctx.mu);
    let cy = measurement_C(rho);
    let dw = noise_D(rho, ctx.eta_min_rad, ctx.eta_max_rad, &ctx.bounds);
    (a + l * cy, input_B_w() + l * dw)
}

fn dyn_mat<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Parlett–Reinsch balancing: a diagonal similarity built from exact powers
/// of two that equalizes row and column 1-norms. Eigenvalues are preserved
/// bit-for-bit (the scalings are exact), while QR convergence on badly
/// scaled matrices improves dramatically. The dynamics here mix O(1)
/// kinematic rows with O(10⁴) gravity-gradient rows near perilune, which is
/// exactly the regime where unbalanced QR can stagnate.
fn balance(m: &DMatrix<f64>) -> DMatrix<f64> {
    const RADIX: f64 = 2.0;
    let mut a = m.clone();
    let n = a.nrows();
    for _pass in 0..100 {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c > 0.0 && r > 0.0 && c.is_finite() && r.is_finite() {
                let s = c + r;
                let mut f = 1.0;
                while c < r / RADIX {
                    c *= RADIX;
                    r /= RADIX;
                    f *= RADIX;
                }
                while c >= r * RADIX {
                    c /= RADIX;
                    r *= RADIX;
                    f /= RADIX;
                }
                if c + r < 0.95 * s && f != 1.0 {
                    done = false;
                    for j in 0..n {
                        a[(i, j)] /= f;
                        a[(j, i)] *= f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
    a
}

/// Eigenvalues via balanced, iteration-capped Schur reduction.
///
/// `DMatrix::complex_eigenvalues` runs the Francis QR iteration without
/// balancing and without an iteration cap, and can cycle forever on badly
/// scaled matrices with near-imaginary spectra. This routine balances
/// first, caps the iteration count, and on the (rare) residual failure
/// retries with a tiny deterministic diagonal dither that breaks the
/// symmetric-spectrum cycling. Returns None only if every attempt fails.
fn robust_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = m.nrows();
    let base = balance(m);
    let mag = base.amax().max(1e-300);
    for attempt in 0..4i32 {
        let mut trial = base.clone();
        if attempt > 0 {
            let delta = mag * 1e-13 * 10f64.powi(attempt - 1);
            for i in 0..n {
                trial[(i, i)] += if i % 2 == 0 { delta } else { -delta };
            }
        }
        if let Some(schur) = nalgebra::Schur::try_new(trial, f64::EPSILON, 100 * n.max(4)) {
            return Some(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    None
}

/// Largest real part among the eigenvalues of a square matrix.
///
/// If the eigenvalue iteration fails to converge (see
/// [`robust_eigenvalues`]), returns +∞ — i.e. the matrix is reported as
/// unstable, which is the conservative direction for certification.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    match robust_eigenvalues(a) {
        Some(eigs) => eigs
            .iter()
            .map(|ev| ev.re)
            .fold(f64::NEG_INFINITY, f64::max),
        None => f64::INFINITY,
    }
}

/// Spectral abscissa of the closed-loop error dynamics at ρ.
pub fn closed_loop_abscissa(l: &Matrix6<f64>, rho: ParamPoint, ctx: &PlantContext) -> f64 {
    let (acl, _) = error_system(l, rho, ctx);
    spectral_abscissa(&dyn_mat(&acl))
}

/// σ_max(C (jωI − A)⁻¹ B), or None if the shifted matrix is singular.
pub fn frequency_response_sigma(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: f64,
) -> Option<f64> {
    let n = a.nrows();
    let mut m = DMatrix::<Complex<f64>>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
        }
    }
    for i in 0..n {
        m[(i, i)] += Complex::new(0.0, w);
    }
    let bc = b.map(|x| Complex::new(x, 0.0));
    let x = m.lu().solve(&bc)?;
    let g = c.map(|x| Complex::new(x, 0.0)) * x;
    Some(g.singular_values().max())
}

/// Frequencies for the lower-bound sweep: DC, a log grid over [1e-2, 1e3],
/// and the imaginary parts of the eigenvalues of A (resonance candidates).
fn sweep_frequencies(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ws = vec![0.0];
    for k in 0..60 {
        ws.push(10f64.powf(-2.0 + 5.0 * k as f64 / 59.0));
    }
    // Resonance candidates are only a refinement of the lower bound; if the
    // eigenvalue iteration fails the log grid still gives a valid bound.
    if let Some(eigs) = robust_eigenvalues(a) {
        for ev in &eigs {
            if ev.im.abs() > 1e-12 {
                ws.push(ev.im.abs());
            }
        }
    }
    ws.sort_by(f64::total_cmp);
    ws
}

fn hamiltonian(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n))
        .copy_from(&(b * b.transpose() / (gamma * gamma)));
    h.view_mut((n, 0), (n, n))
        .copy_from(&(-(c.transpose() * c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    h
}

/// True if H has an eigenvalue on the imaginary axis (away from the
/// origin), with the real-part test scaled by the spectral radius.
///
/// If the eigenvalue iteration fails to converge, answers `true` ("γ is
/// below the norm"): the bisection then keeps raising its bracket, so the
/// returned norm stays an upper bound, and persistent failure surfaces as
/// an ill-posed bracket error instead of a silently optimistic norm.
fn has_imaginary_eig(h: &DMatrix<f64>) -> bool {
    let Some(eigs) = robust_eigenvalues(h) else {
        return true;
    };
    let scale = eigs
        .iter()
        .map(|ev| ev.norm())
        .fold(1.0f64, f64::max);
    eigs.iter()
        .any(|ev| ev.re.abs() < 1e-9 * scale && ev.im.abs() > 1e-12)
}

/// H∞ norm of the stable system (A, B, C) to relative tolerance `rtol`.
///
/// Returns the upper end of the final bisection bracket, so the result is
/// always an upper bound on the true norm. Errors with [`NavError::Unstable`]
/// if A has an eigenvalue with non-negative real part.
pub fn hinf_norm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rtol: f64,
) -> Result<f64> {
    let abscissa = spectral_abscissa(a);
    if abscissa >= 0.0 {
        return Err(NavError::Unstable { abscissa });
    }
    let mut lo = 0.0f64;
    for &w in &sweep_frequencies(a) {
        if let Some(s) = frequency_response_sigma(a, b, c, w) {
            lo = lo.max(s);
        }
    }
    if lo <= 1e-300 {
        return Ok(0.0); // zero transfer (B or C vanishes)
    }
    let mut hi = lo * 1.02;
    while has_imaginary_eig(&hamiltonian(a, b, c, hi)) {
        hi *= 2.0;
        if hi / lo > 1e14 {
            return Err(NavError::IllPosed {
                cond: hi / lo,
                limit: 1e14,
            });
        }
    }
    while hi - lo > rtol * lo {
        let mid = 0.5 * (hi + lo);
        if has_imaginary_eig(&hamiltonian(a, b, c, mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Locates the peak of σ_max(G(jω)) for a stable system: dense log sweep
/// plus golden-section refinement. Returns (ω⋆, σ_max at ω⋆); ω⋆ = 0 means
/// the response peaks at DC.
pub fn peak_gain_frequency(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let abscissa = spectral_abscissa(a);
    if abscissa >= 0.0 {
        return Err(NavError::Unstable { abscissa });
    }
    let mut ws = vec![0.0];
    for k in 0..400 {
        ws.push(10f64.powf(-3.0 + 6.0 * k as f64 / 399.0));
    }
    if let Some(eigs) = robust_eigenvalues(a) {
        for ev in &eigs {
            if ev.im.abs() > 1e-12 {
                ws.push(ev.im.abs());
            }
        }
    }
    ws.sort_by(f64::total_cmp);
    let sig = |w: f64| frequency_response_sigma(a, b, c, w).unwrap_or(0.0);
    let mut best_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &w) in ws.iter().enumerate() {
        let s = sig(w);
        if s > best {
            best = s;
            best_idx = i;
        }
    }
    if best_idx == 0 {
        return Ok((0.0, best));
    }
    let mut lo = if best_idx > 0 { ws[best_idx - 1] } else { ws[0] };
    let mut hi = if best_idx + 1 < ws.len() {
        ws[best_idx + 1]
    } else {
        ws[best_idx] * 2.0
    };
    if lo <= 0.0 {
        lo = ws[best_idx] * 0.5;
    }
    // Golden-section maximization of σ(ω) on [lo, hi].
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sig(x1);
    let mut f2 = sig(x2);
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sig(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sig(x1);
        }
    }
    let w_star = 0.5 * (lo + hi);
    let s_star = sig(w_star);
    if s_star >= best {
        Ok((w_star, s_star))
    } else {
        Ok((ws[best_idx], best))
    }
}

/// Rank of the observability matrix [C; CA; …; CA⁵] at ρ (relative SVD
/// threshold 1e-10).
pub fn observability_rank(rho: ParamPoint, ctx: &PlantContext) -> usize {
    let a = dyn_mat(&plant_A(rho, ctx.mu));
    let c = dyn_mat(&measurement_C(rho));
    let mut obs = DMatrix::zeros(36, 6);
    let mut ck = c;
    for k in 0..6 {
        obs.view_mut((6 * k, 0), (6, 6)).copy_from(&ck);
        ck = &ck * &a;
    }
    let sv = obs.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * 1e-10).count()
}

/// Pole-placement seed gain: at the box center the Earth-bearing channel is
/// inverted to place a double pole at −`pole_scale` on each axis
/// (L₁₁ = r̄₁·2p·I₃, L₂₁ = r̄₁(A₂₁(ρ̄) + p²I₃), Moon columns zero).
pub fn initial_gain(pole_scale: f64, ctx: &PlantContext) -> Matrix6<f64> {
    let center = ctx.bounds.center();
    let a = plant_A(center, ctx.mu);
    let a21 = a.fixed_view::<3, 3>(3, 0).into_owned();
    let mut l = Matrix6::zeros();
    for i in 0..3 {
        l[(i, i)] = center.r1 * 2.0 * pole_scale;
    }
    let block = center.r1 * (a21 + pole_scale * pole_scale * Matrix3::identity());
    l.fixed_view_mut::<3, 3>(3, 0).copy_from(&block);
    l
}

/// Synthesis settings. All numeric tolerances are relative unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Grid density (n_r1, n_r2) used inside the search objective.
    pub synthesis_grid: (usize, usize),
    /// Denser grid used for post-search certification.
    pub validation_grid: (usize, usize),
    /// Pole scales for the multi-start seeds.
    pub pole_scales: Vec<f64>,
    /// Maximum compass-search sweeps per restart.
    pub max_sweeps: usize,
    /// Initial step for the position rows of L.
    pub step_position: f64,
    /// Initial step for the velocity rows of L.
    pub step_velocity: f64,
    /// Search stops when every step falls below this.
    pub step_floor: f64,
    /// A candidate must beat the incumbent by this relative margin.
    pub improvement_rtol: f64,
    /// H∞ bisection tolerance inside the search objective.
    pub search_gamma_rtol: f64,
    /// H∞ bisection tolerance for certification.
    pub certify_gamma_rtol: f64,
    /// Required decay rate: abscissae above −floor are penalized.
    pub abscissa_floor: f64,
    /// Allowed relative excess of validation γ over synthesis γ before the
    /// grid is densified.
    pub adequacy_margin: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            synthesis_grid: (3, 3),
            validation_grid: (7, 7),
            pole_scales: vec![3.0, 4.0, 5.0, 6.5, 8.0],
            max_sweeps: 40,
            step_position: 0.5,
            step_velocity: 2.0,
            step_floor: 1e-3,
            improvement_rtol: 1e-6,
            search_gamma_rtol: 1e-2,
            certify_gamma_rtol: 1e-6,
            abscissa_floor: 3.5,
            adequacy_margin: 0.10,
        }
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    mu: f64,
    bounds: &'a ParamBox,
    eta_min_rad: f64,
    eta_max_rad: f64,
    config: &'a SynthesisConfig,
}

/// SHA-256 over the canonical serialization of the synthesis inputs; ties a
/// gain file to the exact plant and settings that produced it.
pub fn config_hash(ctx: &PlantContext, cfg: &SynthesisConfig) -> String {
    let input = HashInput {
        mu: ctx.mu.value(),
        bounds: &ctx.bounds,
        eta_min_rad: ctx.eta_min_rad,
        eta_max_rad: ctx.eta_max_rad,
        config: cfg,
    };
    let json = serde_json::to_string(&input).expect("hash input serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Search objective for a candidate gain over the grid: +∞ if any point is
/// unstable, a large stability penalty if the worst abscissa is above the
/// floor, otherwise the worst-case H∞ norm.
pub fn search_objective(
    l: &Matrix6<f64>,
    pts: &[ParamPoint],
    ctx: &PlantContext,
    cfg: &SynthesisConfig,
) -> f64 {
    let cz = dyn_mat(&output_C_z());
    let mut systems = Vec::with_capacity(pts.len());
    let mut worst_a = f64::NEG_INFINITY;
    for &rho in pts {
        let (acl, bcl) = error_system(l, rho, ctx);
        let ad = dyn_mat(&acl);
        worst_a = worst_a.max(spectral_abscissa(&ad));
        systems.push((ad, dyn_mat(&bcl)));
    }
    if worst_a >= 0.0 {
        return f64::INFINITY;
    }
    if worst_a > -cfg.abscissa_floor {
        return 1e6 * (1.0 + worst_a + cfg.abscissa_floor);
    }
    let mut gamma = 0.0f64;
    for (ad, bd) in &systems {
        match hinf_norm(ad, bd, &cz, cfg.search_gamma_rtol) {
            Ok(g) => gamma = gamma.max(g),
            Err(_) => return f64::INFINITY,
        }
    }
    gamma
}

/// Outcome of one compass-search restart.
#[derive(Debug, Clone)]
pub struct RestartReport {
    pub pole_scale: f64,
    pub objective: f64,
    pub sweeps: usize,
    /// Objective value after each sweep (the optimizer log).
    pub trace: Vec<f64>,
}

struct SearchOutcome {
    l: Matrix6<f64>,
    objective: f64,
    sweeps: usize,
    trace: Vec<f64>,
}

/// Coordinate pattern search over the 36 gain entries: try ± the per-entry
/// step, accept the first strict improvement, halve every step after a
/// sweep with no improvement, stop at the step floor or the sweep limit.
fn compass_search(
    l0: Matrix6<f64>,
    cfg: &SynthesisConfig,
    eval: &mut dyn FnMut(&Matrix6<f64>) -> f64,
) -> SearchOutcome {
    let mut l = l0;
    let mut f = eval(&l);
    let mut steps = Matrix6::zeros();
    for j in 0..6 {
        for i in 0..6 {
            steps[(i, j)] = if i < 3 {
                cfg.step_position
            } else {
                cfg.step_velocity
            };
        }
    }
    let mut sweeps = 0;
    let mut trace = vec![f];
    while sweeps < cfg.max_sweeps && steps.max() >= cfg.step_floor {
        let mut improved = false;
        for i in 0..6 {
            for j in 0..6 {
                for sign in [1.0, -1.0] {
                    let mut lt = l;
                    lt[(i, j)] += sign * steps[(i, j)];
                    let ft = eval(&lt);
                    if ft < f * (1.0 - cfg.improvement_rtol) {
                        l = lt;
                        f = ft;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            steps *= 0.5;
        }
        sweeps += 1;
        trace.push(f);
    }
    SearchOutcome {
        l,
        objective: f,
        sweeps,
        trace,
    }
}

/// Worst-case closed-loop assessment of a gain over a parameter grid.
#[derive(Debug, Clone, Copy)]
pub struct GridAssessment {
    /// max over the grid of the closed-loop H∞ norm.
    pub gamma: f64,
    /// max over the grid of the closed-loop spectral abscissa.
    pub worst_abscissa: f64,
    /// Grid point attaining the worst γ.
    pub gamma_point: ParamPoint,
    /// Grid point attaining the worst abscissa.
    pub abscissa_point: ParamPoint,
}

/// Evaluates stability and worst-case γ for a fixed gain on a grid.
/// Errors with [`NavError::Unstable`] if any point has abscissa ≥ 0.
pub fn assess_gain_on_grid(
    l: &Matrix6<f64>,
    ctx: &PlantContext,
    pts: &[ParamPoint],
    rtol: f64,
) -> Result<GridAssessment> {
    if pts.is_empty() {
        return Err(NavError::Validation {
            field: "grid".into(),
            message: "empty parameter grid".into(),
        });
    }
    let cz = dyn_mat(&output_C_z());
    let mut worst_abscissa = f64::NEG_INFINITY;
    let mut abscissa_point = pts[0];
    let mut systems = Vec::with_capacity(pts.len());
    for &rho in pts {
        let (acl, bcl) = error_system(l, rho, ctx);
        let ad = dyn_mat(&acl);
        let a = spectral_abscissa(&ad);
        if a > worst_abscissa {
            worst_abscissa = a;
            abscissa_point = rho;
        }
        systems.push((rho, ad, dyn_mat(&bcl)));
    }
    if worst_abscissa >= 0.0 {
        return Err(NavError::Unstable {
            abscissa: worst_abscissa,
        });
    }
    let mut gamma = 0.0f64;
    let mut gamma_point = pts[0];
    for (rho, ad, bd) in &systems {
        let g = hinf_norm(ad, bd, &cz, rtol)?;
        if g > gamma {
            gamma = g;
            gamma_point = *rho;
        }
    }
    Ok(GridAssessment {
        gamma,
        worst_abscissa,
        gamma_point,
        abscissa_point,
    })
}

/// Grid densities and certification results recorded with a gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridReport {
    /// Synthesis grid density (n_r1, n_r2).
    pub synthesis: [usize; 2],
    /// Validation grid density.
    pub validation: [usize; 2],
    /// Certified worst γ over the synthesis grid.
    pub gamma_synthesis: f64,
    /// Certified worst γ over the validation grid.
    pub gamma_validation: f64,
    /// Worst closed-loop spectral abscissa over the validation grid.
    pub worst_validation_abscissa: f64,
}

/// A synthesized observer gain with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    /// Gain matrix (stable-injection convention: A + L·C_y is Hurwitz).
    pub l: Matrix6<f64>,
    /// Certified disturbance-to-position H∞ bound over the box grids.
    pub gamma: f64,
    /// Parameter box the certificate covers.
    pub bounds: ParamBox,
    /// Grid densities and per-grid certification values.
    pub grids: GridReport,
    /// Hash of the synthesis inputs that produced this gain.
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainFile {
    #[serde(rename = "L")]
    l: Vec<f64>,
    gamma: f64,
    #[serde(rename = "box")]
    bounds: ParamBox,
    grids: GridReport,
    config_hash: String,
}

impl ObserverGain {
    /// Serializes to the gain-file JSON schema (keys L, gamma, box, grids,
    /// config_hash; L in row-major order).
    pub fn to_json_string(&self) -> Result<String> {
        let mut l = Vec::with_capacity(36);
        for i in 0..6 {
            for j in 0..6 {
                l.push(self.l[(i, j)]);
            }
        }
        let file = GainFile {
            l,
            gamma: self.gamma,
            bounds: self.bounds,
            grids: self.grids,
            config_hash: self.config_hash.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| NavError::Parse(e.to_string()))
    }

    /// Parses and validates a gain file.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GainFile =
            serde_json::from_str(s).map_err(|e| NavError::Parse(format!("gain file: {e}")))?;
        if file.l.len() != 36 {
            return Err(NavError::Schema(format!(
                "gain file: L must have 36 entries, got {}",
                file.l.len()
            )));
        }
        if !file.l.iter().all(|x| x.is_finite()) {
            return Err(NavError::Schema("gain file: non-finite entry in L".into()));
        }
        if !(file.gamma.is_finite() && file.gamma > 0.0) {
            return Err(NavError::Schema(format!(
                "gain file: gamma must be finite and positive, got {}",
                file.gamma
            )));
        }
        file.bounds.validate()?;
        let mut l = Matrix6::zeros();
        for i in 0..6 {
            for j in 0..6 {
                l[(i, j)] = file.l[6 * i + j];
            }
        }
        Ok(ObserverGain {
            l,
            gamma: file.gamma,
            bounds: file.bounds,
            grids: file.grids,
            config_hash: file.config_hash,
        })
    }

    /// Writes the gain file to disk.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut s = self.to_json_string()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Reads and validates a gain file from disk.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }
}

/// Full synthesis outcome: the certified gain plus per-restart diagnostics.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub gain: ObserverGain,
    pub restarts: Vec<RestartReport>,
    /// True if the adequacy check forced a densified re-run.
    pub densified: bool,
}

/// Synthesizes a robust observer gain: multi-start pole-placement seeds,
/// compass search on the worst-case grid objective, then certification on
/// the validation grid. If the validation γ exceeds the synthesis γ by more
/// than the adequacy margin, the synthesis grid is densified once and the
/// search re-run from the incumbent.
pub fn synthesize_gain(ctx: &PlantContext, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    ctx.bounds.validate()?;
    if cfg.pole_scales.is_empty() {
        return Err(NavError::Validation {
            field: "pole_scales".into(),
            message: "at least one restart seed is required".into(),
        });
    }
    let (s1, s2) = cfg.synthesis_grid;
    let (v1, v2) = cfg.validation_grid;
    let rank = observability_rank(ctx.bounds.center(), ctx);
    if rank < 6 {
        return Err(NavError::NotObservable { rank, dim: 6 });
    }

    let syn_pts = param_grid(&ctx.bounds, s1, s2)?;
    let mut restarts = Vec::new();
    let mut best: Option<SearchOutcome> = None;
    for &p in &cfg.pole_scales {
        let seed = initial_gain(p, ctx);
        let outcome = compass_search(seed, cfg, &mut |l| search_objective(l, &syn_pts, ctx, cfg));
        restarts.push(RestartReport {
            pole_scale: p,
            objective: outcome.objective,
            sweeps: outcome.sweeps,
            trace: outcome.trace.clone(),
        });
        if best
            .as_ref()
            .map_or(true, |b| outcome.objective < b.objective)
        {
            best = Some(outcome);
        }
    }
    let mut best = best.expect("at least one restart ran");
    if !best.objective.is_finite() || best.objective >= 1e6 {
        return Err(NavError::SynthesisFailed(format!(
            "no restart produced a gain meeting the stability floor (best objective {:.3e})",
            best.objective
        )));
    }

    let mut syn_cert = assess_gain_on_grid(&best.l, ctx, &syn_pts, cfg.certify_gamma_rtol)?;
    let val_pts = param_grid(&ctx.bounds, v1, v2)?;
    let mut val_cert = assess_gain_on_grid(&best.l, ctx, &val_pts, cfg.certify_gamma_rtol)
        .map_err(|e| match e {
            NavError::Unstable { abscissa } => NavError::SynthesisFailed(format!(
                "validation grid found an unstable point (abscissa {abscissa:.3e})"
            )),
            other => other,
        })?;

    let mut densified = false;
    let mut synthesis_density = [s1, s2];
    if val_cert.gamma > (1.0 + cfg.adequacy_margin) * syn_cert.gamma {
        densified = true;
        synthesis_density = [2 * s1 - 1, 2 * s2 - 1];
        let dense_pts = param_grid(&ctx.bounds, synthesis_density[0], synthesis_density[1])?;
        let outcome =
            compass_search(best.l, cfg, &mut |l| search_objective(l, &dense_pts, ctx, cfg));
        if !outcome.objective.is_finite() || outcome.objective >= 1e6 {
            return Err(NavError::SynthesisFailed(
                "densified re-run lost stability".into(),
            ));
        }
        best = outcome;
        syn_cert = assess_gain_on_grid(&best.l, ctx, &dense_pts, cfg.certify_gamma_rtol)?;
        val_cert = assess_gain_on_grid(&best.l, ctx, &val_pts, cfg.certify_gamma_rtol)
            .map_err(|e| match e {
                NavError::Unstable { abscissa } => NavError::SynthesisFailed(format!(
                    "validation grid found an unstable point after densification (abscissa {abscissa:.3e})"
                )),
                other => other,
            })?;
        if val_cert.gamma > (1.0 + cfg.adequacy_margin) * syn_cert.gamma {
            return Err(NavError::SynthesisFailed(format!(
                "validation gamma {:.6e} still exceeds synthesis gamma {:.6e} by more than {:.0}% after densification",
                val_cert.gamma,
                syn_cert.gamma,
                cfg.adequacy_margin * 100.0
            )));
        }
    }

    let gain = ObserverGain {
        l: best.l,
        gamma: syn_cert.gamma.max(val_cert.gamma),
        bounds: ctx.bounds,
        grids: GridReport {
            synthesis: synthesis_density,
            validation: [v1, v2],
            gamma_synthesis: syn_cert.gamma,
            gamma_validation: val_cert.gamma,
            worst_validation_abscissa: val_cert.worst_abscissa,
        },
        config_hash: config_hash(ctx, cfg),
    };
    Ok(SynthesisResult {
        gain,
        restarts,
        densified,
    })
}
