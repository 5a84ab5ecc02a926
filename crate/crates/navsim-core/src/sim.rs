//! Closed-loop simulation harness: the end-to-end run loop, summary
//! metrics, CSV/JSON export, offline re-analysis, and Monte Carlo batching.

use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::constants::{DEFAULT_SETTLE_TU, DU_KM};
use crate::cr3bp::{DisturbanceSource, IntegratorConfig, StateVector};
use crate::hinf::ObserverGain;
use crate::lft::ParamPoint;
use crate::observer::{schedule_rho, step_closed_loop, RhoSource, ScheduledParam};
use crate::scenario::Scenario;
use crate::sensing::{measure, shaped_noise_source};
use crate::{NavError, Result};

/// Run CSV header (fixed schema, one row per time-grid point).
pub const RUN_CSV_HEADER: &str = "t, x,y,z,vx,vy,vz, xh,yh,zh,vxh,vyh,vzh, \
ex,ey,ez,evx,evy,evz, ym1,ym2,ym3,ym4,ym5,ym6, r1_used,r2_used, rho_source, \
one_minus_c2, closure_residual";

const CSV_FIELDS: usize = 30;

/// One time-grid sample of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub t: f64,
    pub truth: StateVector,
    pub estimate: StateVector,
    /// error = truth − estimate.
    pub error: StateVector,
    /// Measured bearing stack at this sample.
    pub ym: Vector6<f64>,
    /// Scheduling decision at this sample.
    pub scheduled: ScheduledParam,
}

/// Summary metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryStats {
    /// Settle time separating the transient from the steady state, TU.
    pub settle_tu: f64,
    /// Per-component max |error| over the whole run.
    pub max_abs: [f64; 6],
    /// Per-component RMS error over the whole run.
    pub rms: [f64; 6],
    /// Per-component max |error| over t > settle.
    pub post_transient_max: [f64; 6],
    /// Steps on which the schedule fell back to the estimate.
    pub fallback_count: u64,
    /// Steps on which the schedule clamped into the box.
    pub clamp_count: u64,
    /// Position rows of `max_abs` in kilometers (1 DU = 384 400 km).
    pub max_abs_position_km: [f64; 3],
    /// Position rows of `post_transient_max` in kilometers.
    pub post_transient_max_position_km: [f64; 3],
}

/// A complete run: the sample series plus its summary.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<RunRecord>,
    pub stats: SummaryStats,
}

/// Computes summary metrics from a sample series with the given settle
/// time. Post-transient maxima are over samples with t strictly greater
/// than `settle_tu` (zero if the run is shorter than the settle time).
pub fn compute_stats(records: &[RunRecord], settle_tu: f64) -> SummaryStats {
    let n = records.len().max(1) as f64;
    let mut max_abs = [0.0f64; 6];
    let mut sum_sq = [0.0f64; 6];
    let mut post_max = [0.0f64; 6];
    let mut fallback = 0u64;
    let mut clamp = 0u64;
    for r in records {
        for i in 0..6 {
            let e = r.error[i].abs();
            max_abs[i] = max_abs[i].max(e);
            sum_sq[i] += e * e;
            if r.t > settle_tu {
                post_max[i] = post_max[i].max(e);
            }
        }
        match r.scheduled.source {
            RhoSource::EstimateFallback => fallback += 1,
            RhoSource::Clamped => clamp += 1,
            RhoSource::Measured => {}
        }
    }
    let mut rms = [0.0f64; 6];
    for i in 0..6 {
        rms[i] = (sum_sq[i] / n).sqrt();
    }
    let km = |v: &[f64; 6]| [v[0] * DU_KM, v[1] * DU_KM, v[2] * DU_KM];
    SummaryStats {
        settle_tu,
        max_abs,
        rms,
        post_transient_max: post_max,
        fallback_count: fallback,
        clamp_count: clamp,
        max_abs_position_km: km(&max_abs),
        post_transient_max_position_km: km(&post_max),
    }
}

/// Runs the closed loop with the scenario's own seeds.
pub fn run_scenario(sc: &Scenario, gain: &ObserverGain) -> Result<RunResult> {
    run_scenario_with_seeds(sc, gain, sc.noise.seed, sc.disturbance.seed)
}

/// Runs the closed loop with explicit noise/disturbance seeds (CLI
/// `--seed` override and Monte Carlo batching).
pub fn run_scenario_with_seeds(
    sc: &Scenario,
    gain: &ObserverGain,
    noise_seed: u64,
    disturbance_seed: u64,
) -> Result<RunResult> {
    sc.validate()?;
    let mu = sc.mass_ratio()?;
    if !gain.bounds.covers(&sc.param_box) {
        return Err(NavError::BoxMismatch(format!(
            "gain certified on r1 [{}, {}] x r2 [{}, {}] does not cover the scenario box \
             r1 [{}, {}] x r2 [{}, {}]",
            gain.bounds.r1_min,
            gain.bounds.r1_max,
            gain.bounds.r2_min,
            gain.bounds.r2_max,
            sc.param_box.r1_min,
            sc.param_box.r1_max,
            sc.param_box.r2_min,
            sc.param_box.r2_max,
        )));
    }
    let step = match sc.integrator {
        IntegratorConfig::Rk4 { step } => step,
        IntegratorConfig::Rkf45 { .. } => {
            return Err(NavError::Validation {
                field: "integrator".into(),
                message: "closed-loop simulation requires the fixed-step rk4 integrator \
                          (the measurement grid is tied to the step)"
                    .into(),
            })
        }
    };

    let mut noise_cfg = sc.noise;
    noise_cfg.seed = noise_seed;
    let mut noise = shaped_noise_source(&noise_cfg)?;
    let mut disturbance = sc.disturbance.source_with_seed(disturbance_seed);

    let n_steps = (sc.duration_tu / step + 1e-9).floor() as usize;
    let mut truth = sc.initial_state_vector();
    let mut x_hat = sc.initial_estimate_vector();
    let mut records = Vec::with_capacity(n_steps + 1);
    for k in 0..n_steps {
        let t = k as f64 * step;
        let noise_k = noise.sample_at(t);
        let dist_k = disturbance.sample(t);
        let (truth_next, x_hat_next, diag) = step_closed_loop(
            &truth,
            &x_hat,
            step,
            mu,
            &gain.l,
            &sc.schedule_policy,
            &sc.param_box,
            &noise_cfg,
            &noise_k,
            &dist_k,
        )
        .map_err(|e| NavError::StepFailure {
            t,
            reason: e.to_string(),
        })?;
        records.push(RunRecord {
            t,
            truth,
            estimate: x_hat,
            error: truth - x_hat,
            ym: diag.ym,
            scheduled: diag.scheduled,
        });
        truth = truth_next;
        x_hat = x_hat_next;
    }
    // Final row: measurement and schedule at the end state.
    let t_end = n_steps as f64 * step;
    let noise_end = noise.sample_at(t_end);
    let ym = measure(&truth, mu, &noise_end, &noise_cfg, &sc.param_box)?.y_m();
    let scheduled = schedule_rho(&ym, &x_hat, &sc.schedule_policy, mu, &sc.param_box);
    records.push(RunRecord {
        t: t_end,
        truth,
        estimate: x_hat,
        error: truth - x_hat,
        ym,
        scheduled,
    });

    let stats = compute_stats(&records, DEFAULT_SETTLE_TU);
    Ok(RunResult { records, stats })
}

fn csv_row(r: &RunRecord) -> String {
    let mut row = String::with_capacity(CSV_FIELDS * 26);
    let mut push = |v: f64| {
        if !row.is_empty() {
            row.push(',');
        }
        row.push_str(&format!("{v:.16e}"));
    };
    push(r.t);
    for i in 0..6 {
        push(r.truth[i]);
    }
    for i in 0..6 {
        push(r.estimate[i]);
    }
    for i in 0..6 {
        push(r.error[i]);
    }
    for i in 0..6 {
        push(r.ym[i]);
    }
    push(r.scheduled.rho.r1);
    push(r.scheduled.rho.r2);
    row.push(',');
    row.push_str(r.scheduled.source.as_str());
    let mut push_tail = |v: f64| {
        row.push(',');
        row.push_str(&format!("{v:.16e}"));
    };
    push_tail(r.scheduled.one_minus_c2);
    push_tail(r.scheduled.residual);
    row
}

/// Writes the run series as CSV (fixed header, 17-significant-digit
/// decimals, so re-analysis reproduces the online stats).
pub fn export_csv(result: &RunResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{RUN_CSV_HEADER}")?;
    for r in &result.records {
        writeln!(w, "{}", csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Header for truth-only trajectory CSVs (`propagate`).
pub const TRAJECTORY_CSV_HEADER: &str = "t, x,y,z,vx,vy,vz, jacobi";

/// Writes a truth-only trajectory as CSV with the Jacobi constant per row,
/// in the same 17-significant-digit format as run CSVs.
pub fn export_trajectory_csv(
    traj: &crate::cr3bp::Trajectory,
    mu: crate::cr3bp::MassRatio,
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let c = crate::cr3bp::jacobi_constant(s, mu)?;
        let mut row = format!("{t:.16e}");
        for i in 0..6 {
            row.push_str(&format!(",{:.16e}", s[i]));
        }
        row.push_str(&format!(",{c:.16e}"));
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes summary stats as pretty JSON.
pub fn export_summary(stats: &SummaryStats, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(stats).map_err(|e| NavError::Parse(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Recomputes run statistics from an exported CSV with the default settle
/// time.
pub fn analyze(path: &Path) -> Result<SummaryStats> {
    analyze_with_settle(path, DEFAULT_SETTLE_TU)
}

/// Recomputes run statistics from an exported CSV.
pub fn analyze_with_settle(path: &Path, settle_tu: f64) -> Result<SummaryStats> {
    Ok(compute_stats(&load_run_csv(path)?, settle_tu))
}

/// Parses an exported run CSV back into its sample series, validating the
/// header, the field count, and the truth − estimate = error consistency.
pub fn load_run_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| NavError::Schema("empty CSV file".into()))?;
    let expect: Vec<&str> = RUN_CSV_HEADER.split(',').map(str::trim).collect();
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != expect {
        return Err(NavError::Schema(format!(
            "CSV header does not match the run schema (got {} columns)",
            got.len()
        )));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != CSV_FIELDS {
            return Err(NavError::Schema(format!(
                "line {lineno}: expected {CSV_FIELDS} fields, got {}",
                toks.len()
            )));
        }
        let num = |col: usize| -> Result<f64> {
            toks[col].parse::<f64>().map_err(|e| {
                NavError::Schema(format!("line {lineno}, column {}: {e}", col + 1))
            })
        };
        let t = num(0)?;
        let mut truth = StateVector::zeros();
        let mut estimate = StateVector::zeros();
        let mut error = StateVector::zeros();
        let mut ym = Vector6::zeros();
        for i in 0..6 {
            truth[i] = num(1 + i)?;
            estimate[i] = num(7 + i)?;
            error[i] = num(13 + i)?;
            ym[i] = num(19 + i)?;
        }
        let rho = ParamPoint {
            r1: num(25)?,
            r2: num(26)?,
        };
        let source: RhoSource = toks[27]
            .parse()
            .map_err(|e: NavError| NavError::Schema(format!("line {lineno}: {e}")))?;
        let one_minus_c2 = num(28)?;
        let residual = num(29)?;
        let defect = (error - (truth - estimate)).amax();
        if defect > 1e-9 {
            return Err(NavError::Schema(format!(
                "line {lineno}: error column inconsistent with truth - estimate (defect {defect:.3e})"
            )));
        }
        records.push(RunRecord {
            t,
            truth,
            estimate,
            error,
            ym,
            scheduled: ScheduledParam {
                rho,
                source,
                one_minus_c2,
                residual,
            },
        });
    }
    if records.is_empty() {
        return Err(NavError::Schema("CSV has no data rows".into()));
    }
    Ok(records)
}

/// One Monte Carlo run's identity and summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummaryRow {
    pub run_index: usize,
    pub noise_seed: u64,
    pub disturbance_seed: u64,
    /// Max over position components of the post-transient max, DU.
    pub post_transient_position_max: f64,
    pub stats: SummaryStats,
}

/// Batch aggregate across a Monte Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloAggregate {
    pub n_runs: usize,
    pub base_seed: u64,
    pub settle_tu: f64,
    /// Max over runs of the per-run post-transient position max, DU.
    pub max_post_transient_position: f64,
    /// 95th percentile (nearest rank) of the per-run values, DU.
    pub p95_post_transient_position: f64,
    /// Median of the per-run values, DU.
    pub median_post_transient_position: f64,
    /// Per-component post-transient max across all runs.
    pub component_post_transient_max: [f64; 6],
    pub runs: Vec<RunSummaryRow>,
}

/// Deterministic per-run seeds derived from the batch base seed.
pub fn derived_seeds(base_seed: u64, run_index: usize) -> (u64, u64) {
    let noise = base_seed.wrapping_add((run_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let disturbance = noise ^ 0xD1B5_4A32_D192_ED03;
    (noise, disturbance)
}

fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs an n-run Monte Carlo batch with deterministically derived seeds.
/// Runs execute concurrently; when `out_dir` is given, each worker writes
/// its run as `run_XXX.csv` and the coordinator writes `aggregate.json`
/// after all runs complete.
pub fn monte_carlo(
    sc: &Scenario,
    gain: &ObserverGain,
    n_runs: usize,
    base_seed: u64,
    out_dir: Option<&Path>,
) -> Result<MonteCarloAggregate> {
    if n_runs < 1 {
        return Err(NavError::Validation {
            field: "n_runs".into(),
            message: "at least one run is required".into(),
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let slots: Vec<Mutex<Option<Result<RunSummaryRow>>>> =
        (0..n_runs).map(|_| Mutex::new(None)).collect();
    let n_workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_runs);
    std::thread::scope(|scope| {
        for w in 0..n_workers {
            let slots = &slots;
            scope.spawn(move || {
                let mut i = w;
                while i < n_runs {
                    let (noise_seed, dist_seed) = derived_seeds(base_seed, i);
                    let row = run_scenario_with_seeds(sc, gain, noise_seed, dist_seed).and_then(
                        |result| {
                            if let Some(dir) = out_dir {
                                export_csv(&result, &dir.join(format!("run_{i:03}.csv")))?;
                            }
                            let pt = &result.stats.post_transient_max;
                            Ok(RunSummaryRow {
                                run_index: i,
                                noise_seed,
                                disturbance_seed: dist_seed,
                                post_transient_position_max: pt[0].max(pt[1]).max(pt[2]),
                                stats: result.stats,
                            })
                        },
                    );
                    *slots[i].lock().expect("no poisoned slot") = Some(row);
                    i += n_workers;
                }
            });
        }
    });

    let mut runs = Vec::with_capacity(n_runs);
    for slot in slots {
        let row = slot
            .into_inner()
            .expect("no poisoned slot")
            .expect("every slot filled")?;
        runs.push(row);
    }

    let mut per_run: Vec<f64> = runs.iter().map(|r| r.post_transient_position_max).collect();
    per_run.sort_by(f64::total_cmp);
    let mut component_max = [0.0f64; 6];
    for r in &runs {
        for i in 0..6 {
            component_max[i] = component_max[i].max(r.stats.post_transient_max[i]);
        }
    }
    let aggregate = MonteCarloAggregate {
        n_runs,
        base_seed,
        settle_tu: runs[0].stats.settle_tu,
        max_post_transient_position: *per_run.last().expect("n_runs >= 1"),
        p95_post_transient_position: percentile_nearest_rank(&per_run, 0.95),
        median_post_transient_position: median(&per_run),
        component_post_transient_max: component_max,
        runs,
    };
    if let Some(dir) = out_dir {
        let mut s = serde_json::to_string_pretty(&aggregate)
            .map_err(|e| NavError::Parse(e.to_string()))?;
        s.push('\n');
        std::fs::write(dir.join("aggregate.json"), s)?;
    }
    Ok(aggregate)
}

/// Ordinary least-squares line fit; returns (slope, standard error of the
/// slope). Standard error is NaN for fewer than 3 points.
pub fn fit_slope(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(ts.len(), ys.len(), "mismatched series lengths");
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let mut ss_res = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        let r = y - (intercept + slope * t);
        ss_res += r * r;
    }
    let se = (ss_res / (n - 2.0) / stt).sqrt();
    (slope, se)
}

/// Writes a gnuplot script that plots the position-error components of an
/// exported run CSV.
pub fn emit_gnuplot_script(csv_path: &Path, out_path: &Path) -> Result<()> {
    let csv = csv_path.display();
    let mut script = String::new();
    script.push_str("# Position estimation error vs time\n");
    script.push_str("set datafile separator \",\"\n");
    script.push_str("set xlabel \"t [TU]\"\n");
    script.push_str("set ylabel \"position error [DU]\"\n");
    script.push_str("set key outside\n");
    script.push_str("set grid\n");
    script.push_str(&format!(
        "plot \"{csv}\" using 1:14 with lines title \"e_x\", \\\n"
    ));
    script.push_str("     \"\" using 1:15 with lines title \"e_y\", \\\n");
    script.push_str("     \"\" using 1:16 with lines title \"e_z\"\n");
    std::fs::write(out_path, script)?;
    Ok(())
}
