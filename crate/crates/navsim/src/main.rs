//! Command-line front end for cislunar bearing-only navigation: observer
//! gain synthesis, closed-loop simulation, truth propagation, Monte Carlo
//! batches, and run-CSV analysis.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use navsim_core::cr3bp::ZeroDisturbance;
use navsim_core::hinf::{synthesize_gain, ObserverGain, PlantContext, SynthesisConfig};
use navsim_core::scenario::{load_scenario, Scenario};
use navsim_core::sim::{
    analyze_with_settle, derived_seeds, export_csv, export_trajectory_csv, monte_carlo,
    run_scenario_with_seeds, SummaryStats,
};
use navsim_core::NavError;

#[derive(Parser)]
#[command(
    name = "navsim",
    version,
    about = "Robust cislunar navigation: CR3BP truth models, bearing-only sensing, \
             and H-infinity observer synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a certified observer gain for a scenario's parameter box
    Synthesize {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Output gain JSON file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the closed-loop estimation experiment and write the run CSV
    Simulate {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Gain JSON file from `synthesize`
        #[arg(long)]
        gain: PathBuf,
        /// Output run CSV file
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's noise seed (disturbance seed derived)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Propagate the undisturbed truth trajectory and write t, state, Jacobi
    Propagate {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Output trajectory CSV file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an n-run Monte Carlo batch concurrently and aggregate the stats
    Montecarlo {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Gain JSON file from `synthesize`
        #[arg(long)]
        gain: PathBuf,
        /// Number of independent runs
        #[arg(long)]
        runs: usize,
        /// Output directory (per-run CSVs plus aggregate.json)
        #[arg(long)]
        out: PathBuf,
        /// Base seed for the derived per-run seeds (default: scenario noise seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute summary statistics from a run CSV
    Analyze {
        /// Run CSV produced by `simulate`
        path: PathBuf,
        /// Settle time in TU excluded from post-transient statistics
        #[arg(long, default_value_t = 0.5)]
        settle: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), NavError> {
    match cmd {
        Command::Synthesize { scenario, out } => synthesize(&scenario, &out),
        Command::Simulate {
            scenario,
            gain,
            out,
            seed,
        } => simulate(&scenario, &gain, &out, seed),
        Command::Propagate { scenario, out } => propagate(&scenario, &out),
        Command::Montecarlo {
            scenario,
            gain,
            runs,
            out,
            seed,
        } => montecarlo(&scenario, &gain, runs, &out, seed),
        Command::Analyze { path, settle } => analyze_cmd(&path, settle),
    }
}

fn plant_context(sc: &Scenario) -> Result<PlantContext, NavError> {
    PlantContext::new(
        sc.mass_ratio()?,
        sc.param_box,
        sc.noise.eta_min_rad(),
        sc.noise.eta_max_rad(),
    )
}

fn synthesize(scenario: &Path, out: &Path) -> Result<(), NavError> {
    let sc = load_scenario(scenario)?;
    let ctx = plant_context(&sc)?;
    let cfg = SynthesisConfig::default();
    println!(
        "synthesizing observer gain: {} pole-scale restarts, {}x{} synthesis grid, \
         {}x{} validation grid",
        cfg.pole_scales.len(),
        cfg.synthesis_grid.0,
        cfg.synthesis_grid.1,
        cfg.validation_grid.0,
        cfg.validation_grid.1
    );
    let result = synthesize_gain(&ctx, &cfg)?;
    for r in &result.restarts {
        println!(
            "  restart pole scale {:>4.1}: objective {:.6e} after {} sweeps",
            r.pole_scale, r.objective, r.sweeps
        );
    }
    if result.densified {
        println!("  note: synthesis grid was densified after an adequacy-margin breach");
    }
    let g = &result.gain;
    println!(
        "certified gain: gamma = {:.6e} (synthesis grid {:.6e}, validation grid {:.6e})",
        g.gamma, g.grids.gamma_synthesis, g.grids.gamma_validation
    );
    println!(
        "worst closed-loop spectral abscissa on the validation grid: {:.6e}",
        g.grids.worst_validation_abscissa
    );
    g.save(out)?;
    println!("gain written to {}", out.display());
    Ok(())
}

fn simulate(scenario: &Path, gain: &Path, out: &Path, seed: Option<u64>) -> Result<(), NavError> {
    let sc = load_scenario(scenario)?;
    let g = ObserverGain::load(gain)?;
    let (noise_seed, dist_seed) = match seed {
        Some(base) => derived_seeds(base, 0),
        None => (sc.noise.seed, sc.disturbance.seed),
    };
    let result = run_scenario_with_seeds(&sc, &g, noise_seed, dist_seed)?;
    export_csv(&result, out)?;
    println!(
        "run complete: {} rows over {} TU written to {}",
        result.records.len(),
        sc.duration_tu,
        out.display()
    );
    print_stats(&result.stats);
    Ok(())
}

fn propagate(scenario: &Path, out: &Path) -> Result<(), NavError> {
    let sc = load_scenario(scenario)?;
    let mu = sc.mass_ratio()?;
    let traj = navsim_core::cr3bp::propagate(
        &sc.initial_state_vector(),
        (0.0, sc.duration_tu),
        &sc.integrator,
        &mut ZeroDisturbance,
        mu,
    )?;
    export_trajectory_csv(&traj, mu, out)?;
    let c0 = navsim_core::cr3bp::jacobi_constant(&traj.states[0], mu)?;
    let mut drift = 0.0f64;
    for s in &traj.states {
        let c = navsim_core::cr3bp::jacobi_constant(s, mu)?;
        drift = drift.max(((c - c0) / c0).abs());
    }
    println!(
        "propagated {} samples over {} TU; max relative Jacobi drift {:.3e}",
        traj.times.len(),
        sc.duration_tu,
        drift
    );
    println!("trajectory written to {}", out.display());
    Ok(())
}

fn montecarlo(
    scenario: &Path,
    gain: &Path,
    runs: usize,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), NavError> {
    let sc = load_scenario(scenario)?;
    let g = ObserverGain::load(gain)?;
    let base = seed.unwrap_or(sc.noise.seed);
    let agg = monte_carlo(&sc, &g, runs, base, Some(out))?;
    println!(
        "{} runs complete (base seed {}); artifacts in {}",
        agg.n_runs,
        base,
        out.display()
    );
    println!(
        "post-transient position error (DU): max {:.6e}, p95 {:.6e}, median {:.6e}",
        agg.max_post_transient_position,
        agg.p95_post_transient_position,
        agg.median_post_transient_position
    );
    let names = ["x", "y", "z", "vx", "vy", "vz"];
    for (name, v) in names.iter().zip(agg.component_post_transient_max.iter()) {
        println!("  worst post-transient |{name}| across runs: {v:.6e}");
    }
    Ok(())
}

fn analyze_cmd(path: &Path, settle: f64) -> Result<(), NavError> {
    let stats = analyze_with_settle(path, settle)?;
    println!("recomputed statistics for {}", path.display());
    print_stats(&stats);
    Ok(())
}

fn print_stats(stats: &SummaryStats) {
    let names = ["x", "y", "z", "vx", "vy", "vz"];
    println!("  settle time: {} TU", stats.settle_tu);
    println!("  component        max|e|          rms(e)          post-transient max|e|");
    for (i, name) in names.iter().enumerate() {
        println!(
            "  {:<10} {:>15.6e} {:>15.6e} {:>15.6e}",
            name, stats.max_abs[i], stats.rms[i], stats.post_transient_max[i]
        );
    }
    println!(
        "  post-transient position envelope (km): [{:.3e}, {:.3e}, {:.3e}]",
        stats.post_transient_max_position_km[0],
        stats.post_transient_max_position_km[1],
        stats.post_transient_max_position_km[2]
    );
    println!(
        "  schedule diagnostics: {} estimate-fallback samples, {} clamped samples",
        stats.fallback_count, stats.clamp_count
    );
}
