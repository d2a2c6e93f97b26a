use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;

/// Drift-pattern monitoring of grayscale image sequences.
#[derive(Parser, Debug)]
#[command(name = "ortdrift", version)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// File of `key = value` lines supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario sequence as PGM frames plus a manifest.
    Simulate(SimulateArgs),
    /// Fill in frames at requested times by linear interpolation.
    Impute(ImputeArgs),
    /// Leaf-average one frame using a tree fitted on its window.
    Denoise(DenoiseArgs),
    /// Run the CUSUM chart over a sequence (exit 2 on a signal).
    Monitor(MonitorArgs),
    /// Choose the control limit by Monte Carlo, or kappa and q0 by bootstrap.
    Calibrate(CalibrateArgs),
    /// Replicated IC/OC run-length experiment.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Default)]
pub struct ScenarioArgs {
    /// s1..s5
    #[arg(long)]
    scenario: Option<ortdrift::simgen::Scenario>,
    /// Frame side length in pixels.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    change_time: Option<f64>,
    /// Intensity drift rate (s5).
    #[arg(long)]
    alpha: Option<f64>,
    /// Square contrast at t = 0 (s5).
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct FitArgs {
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Deterministic split directions, counting the three axes.
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    n_random: Option<usize>,
    /// Local refinement of the best directions.
    #[arg(long)]
    refine: Option<bool>,
    /// Split cutoff as a fraction of the estimated noise variance.
    #[arg(long)]
    noise_fraction: Option<f64>,
    /// Absolute split cutoff; overrides --noise-fraction.
    #[arg(long)]
    gain_cutoff: Option<f64>,
    #[arg(long)]
    time_scale: Option<f64>,
    #[arg(long)]
    fit_seed: Option<u64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// ic or oc
    #[arg(long)]
    regime: Option<ortdrift::simgen::Regime>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 8 or 16
    #[arg(long)]
    bit_depth: Option<u8>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct ImputeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated target times.
    #[arg(long)]
    times: Option<String>,
    /// Min-max scale the imputed sequence to [0, 1].
    #[arg(long)]
    scale: Option<bool>,
    #[arg(long)]
    bit_depth: Option<u8>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct DenoiseArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    m0: Option<usize>,
    /// 0-based index of the frame to denoise.
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    bit_depth: Option<u8>,
    #[command(flatten)]
    fit: FitArgs,
    /// Output PGM file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct MonitorArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    q0: Option<f64>,
    #[arg(long)]
    theta_sq: Option<f64>,
    /// Summary written by `calibrate`; supplies kappa, q0 and theta_sq.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// In-control manifest to estimate theta_sq from.
    #[arg(long)]
    phase1: Option<PathBuf>,
    /// Keep charting after the first signal.
    #[arg(long)]
    continue_after_signal: Option<bool>,
    #[command(flatten)]
    fit: FitArgs,
    /// Chart CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct CalibrateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Observed in-control manifest: bootstrap kappa and q0 instead of
    /// simulating.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    arl0: Option<f64>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Last frame of each simulated replicate; runs are censored there
    /// unless --max-run-length is given.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    max_run_length: Option<usize>,
    #[arg(long)]
    q0_low: Option<f64>,
    #[arg(long)]
    q0_high: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta_sq: Option<f64>,
    /// In-control manifest to estimate theta_sq from.
    #[arg(long)]
    phase1: Option<PathBuf>,
    /// Frames after the first m0 in the simulated Phase-I sequence.
    #[arg(long)]
    phase1_frames: Option<usize>,
    /// First and last 1-based frame averaged by the bootstrap.
    #[arg(long)]
    j_lo: Option<usize>,
    #[arg(long)]
    j_hi: Option<usize>,
    #[arg(long)]
    n_bootstrap: Option<usize>,
    #[arg(long)]
    keep_fraction: Option<f64>,
    #[command(flatten)]
    fit: FitArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct EvalArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// ic, oc or both
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    q0: Option<f64>,
    #[arg(long)]
    theta_sq: Option<f64>,
    /// Summary written by `calibrate`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Last frame of each simulated replicate; runs are censored there
    /// unless --max-run-length is given.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    max_run_length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fit: FitArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Signal) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
