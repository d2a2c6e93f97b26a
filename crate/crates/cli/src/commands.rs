use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use ortdrift::calibrate::{
    bootstrap_limits, calibrate_q0, write_calibration_csv, write_calibration_summary, BootstrapConfig,
    CalibrationConfig, RunLengthSampler, ScenarioSource,
};
use ortdrift::eval::{
    replicate_experiment, write_report_csv, write_summary_header, write_summary_row, ChartSettings, PipelineConfig,
};
use ortdrift::model::ImageSequence;
use ortdrift::monitor::{estimate_theta_sq, fmt_float, run_monitor, write_chart_csv, MonitorState};
use ortdrift::ort::{FitConfig, GainCutoff, DEFAULT_NOISE_FRACTION};
use ortdrift::predict::denoise_in_window;
use ortdrift::preprocess::{impute_missing, load_sequence, save_sequence, scale_intensities, write_pgm};
use ortdrift::simgen::{Regime, Scenario, ScenarioSpec};

use crate::settings::{read_key_values, Settings};
use crate::{
    CalibrateArgs, Cli, Command, DenoiseArgs, EvalArgs, FitArgs, ImputeArgs, MonitorArgs, ScenarioArgs, SimulateArgs,
};

pub enum Outcome {
    Done,
    Signal,
}

const SIDECAR: &str = "config.txt";

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(&mut settings, a),
        Command::Impute(a) => impute(&mut settings, a),
        Command::Denoise(a) => denoise(&mut settings, a),
        Command::Monitor(a) => monitor(&mut settings, a),
        Command::Calibrate(a) => calibrate(&mut settings, a),
        Command::Eval(a) => eval(&mut settings, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Sidecar next to a single output file.
fn file_sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.txt");
    out.with_file_name(name)
}

fn load(settings: &mut Settings, key: &str, path: &Path) -> Result<ImageSequence> {
    settings.record(key, path.display());
    Ok(load_sequence(path)?)
}

fn scenario_spec(settings: &mut Settings, a: &ScenarioArgs, regime: Regime, default_n: usize) -> Result<ScenarioSpec> {
    let scenario = settings.get("scenario", a.scenario, Scenario::S1)?;
    let base = ScenarioSpec::new(scenario, regime);
    let spec = ScenarioSpec {
        n: settings.get("n", a.n, default_n)?,
        sigma: settings.get("sigma", a.sigma, base.sigma)?,
        change_time: settings.get("change_time", a.change_time, base.change_time)?,
        alpha: settings.get("alpha", a.alpha, base.alpha)?,
        beta: settings.get("beta", a.beta, base.beta)?,
        ..base
    };
    spec.validate()?;
    Ok(spec)
}

fn fit_config(settings: &mut Settings, a: &FitArgs) -> Result<FitConfig> {
    let d = FitConfig::default();
    let fraction = settings.get("noise_fraction", a.noise_fraction, DEFAULT_NOISE_FRACTION)?;
    let gain_cutoff = match settings.opt("gain_cutoff", a.gain_cutoff)? {
        Some(c) => GainCutoff::Absolute(c),
        None => GainCutoff::NoiseFraction(fraction),
    };
    let cfg = FitConfig {
        gain_cutoff,
        min_leaf: settings.get("min_leaf", a.min_leaf, d.min_leaf)?,
        max_depth: settings.get("max_depth", a.max_depth, d.max_depth)?,
        n_grid_directions: settings.get("n_grid", a.n_grid, d.n_grid_directions)?,
        n_random_directions: settings.get("n_random", a.n_random, d.n_random_directions)?,
        time_scale: settings.get("time_scale", a.time_scale, d.time_scale)?,
        refine: settings.get("refine", a.refine, d.refine)?,
        seed: settings.get("fit_seed", a.fit_seed, d.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn bit_depth(settings: &mut Settings, flag: Option<u8>) -> Result<u8> {
    let b = settings.get("bit_depth", flag, 16u8)?;
    ensure!(b == 8 || b == 16, "--bit-depth must be 8 or 16");
    Ok(b)
}

fn simulate(settings: &mut Settings, a: SimulateArgs) -> Result<Outcome> {
    let regime = settings.get("regime", a.regime, Regime::InControl)?;
    let mut spec = scenario_spec(settings, &a.scenario, regime, 128)?;
    spec.horizon = settings.get("horizon", a.horizon, spec.horizon)?;
    spec.seed = settings.get("seed", a.seed, 0u64)?;
    let depth = bit_depth(settings, a.bit_depth)?;
    spec.validate()?;
    let seq = spec.generate()?;
    create_dir(&a.out)?;
    let manifest = save_sequence(&seq, &a.out, depth)?;
    let mut truth = create_file(&a.out.join("truth.csv"))?;
    writeln!(truth, "scenario,regime,change_time,seed,n,sigma,horizon")?;
    writeln!(
        truth,
        "{},{},{},{},{},{},{}",
        spec.scenario, spec.regime, spec.change_time, spec.seed, spec.n, spec.sigma, spec.horizon
    )?;
    truth.flush()?;
    settings.write_sidecar(&a.out.join(SIDECAR))?;
    println!("{}", manifest.display());
    Ok(Outcome::Done)
}

fn parse_times(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad time {s:?} in --times"))
        })
        .collect()
}

fn impute(settings: &mut Settings, a: ImputeArgs) -> Result<Outcome> {
    let seq = load(settings, "manifest", &a.manifest)?;
    let times = match settings.opt::<String>("times", a.times)? {
        Some(t) => parse_times(&t)?,
        None => bail!("missing required setting --times"),
    };
    let scale = settings.get("scale", a.scale, false)?;
    let depth = bit_depth(settings, a.bit_depth)?;
    let mut out = impute_missing(&seq, &times)?;
    if scale {
        out = scale_intensities(&out)?;
    }
    let manifest = save_sequence(&out, &a.out, depth)?;
    settings.write_sidecar(&a.out.join(SIDECAR))?;
    println!("{}", manifest.display());
    Ok(Outcome::Done)
}

fn denoise(settings: &mut Settings, a: DenoiseArgs) -> Result<Outcome> {
    let seq = load(settings, "manifest", &a.manifest)?;
    let m0 = settings.get("m0", a.m0, 20usize)?;
    let frame = settings.require("frame", a.frame)?;
    let depth = bit_depth(settings, a.bit_depth)?;
    let fit = fit_config(settings, &a.fit)?;
    ensure!(m0 >= 2, "--m0 must be at least 2");
    ensure!(seq.len() >= m0, "the sequence has {} frames, fewer than m0 = {m0}", seq.len());
    ensure!(frame < seq.len(), "--frame {frame} is out of range for {} frames", seq.len());
    // The m0-frame window ending at the frame, or the first window.
    let start = (frame + 1).saturating_sub(m0);
    let window = seq.slice(start..start + m0)?;
    let out = denoise_in_window(&window, &fit, frame - start)?;
    write_pgm(&a.out, &out, depth)?;
    settings.write_sidecar(&file_sidecar(&a.out))?;
    println!("{}", a.out.display());
    Ok(Outcome::Done)
}

/// Adds a calibration summary as the lowest-priority settings source.
fn attach_calibration(settings: &mut Settings, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        settings.record("calibration", p.display());
        settings.with_fallback(read_key_values(p)?);
    }
    Ok(())
}

fn monitor(settings: &mut Settings, a: MonitorArgs) -> Result<Outcome> {
    attach_calibration(settings, a.calibration.as_deref())?;
    let seq = load(settings, "manifest", &a.manifest)?;
    let m0 = settings.get("m0", a.m0, 20usize)?;
    let kappa = settings.require("kappa", a.kappa)?;
    let q0 = settings.require("q0", a.q0)?;
    let keep_going = settings.get("continue_after_signal", a.continue_after_signal, false)?;
    let fit = fit_config(settings, &a.fit)?;
    let theta_sq = match (settings.opt("theta_sq", a.theta_sq)?, &a.phase1) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            let phase1 = load(settings, "phase1", p)?;
            let t = estimate_theta_sq(&phase1, m0, &fit)?;
            settings.record("theta_sq", fmt_float(t));
            t
        }
        (None, None) => bail!("theta_sq is needed: pass --theta-sq, --phase1 or --calibration"),
    };
    let mut state = MonitorState::new(theta_sq, kappa, q0, m0)?;
    let run = run_monitor(&seq, &mut state, &fit, keep_going)?;
    let mut out = create_file(&a.out)?;
    write_chart_csv(&mut out, &run.history)?;
    out.flush()?;
    settings.write_sidecar(&file_sidecar(&a.out))?;
    match run.first_signal {
        Some(k) => {
            let t = seq.frames()[k - 1].time();
            println!("signal at frame {k} (t = {t})");
            Ok(Outcome::Signal)
        }
        None => {
            println!("no signal in {} monitored frames", run.history.len());
            Ok(Outcome::Done)
        }
    }
}

fn calibrate(settings: &mut Settings, a: CalibrateArgs) -> Result<Outcome> {
    if let Some(manifest) = a.manifest.clone() {
        return bootstrap(settings, a, &manifest);
    }
    let mut spec = scenario_spec(settings, &a.scenario, Regime::InControl, 64)?;
    let kappa = settings.get("kappa", a.kappa, spec.scenario.default_kappa())?;
    let m0 = settings.get("m0", a.m0, 20usize)?;
    let arl0 = settings.get("arl0", a.arl0, 20.0)?;
    let horizon = settings.get("horizon", a.horizon, spec.horizon)?;
    spec.horizon = horizon;
    spec.validate()?;
    let d = CalibrationConfig::for_arl(arl0);
    let cal_cfg = CalibrationConfig {
        arl0,
        n_replications: settings.get("reps", a.reps, d.n_replications)?,
        max_run_length: settings.get("max_run_length", a.max_run_length, horizon.saturating_sub(m0).max(1))?,
        q0_bracket: (
            settings.get("q0_low", a.q0_low, d.q0_bracket.0)?,
            settings.get("q0_high", a.q0_high, d.q0_bracket.1)?,
        ),
        tolerance: settings.get("tolerance", a.tolerance, d.tolerance)?,
        max_steps: settings.get("max_steps", a.max_steps, d.max_steps)?,
        seed: settings.get("seed", a.seed, d.seed)?,
    };
    cal_cfg.validate()?;
    let fit = fit_config(settings, &a.fit)?;
    let mut pipeline = PipelineConfig::new(spec, m0, kappa);
    pipeline.phase_one_frames = settings.get("phase1_frames", a.phase1_frames, pipeline.phase_one_frames)?;
    pipeline.calibration = cal_cfg.clone();
    pipeline.fit = fit.clone();
    let theta_sq = match (settings.opt("theta_sq", a.theta_sq)?, &a.phase1) {
        (Some(t), _) => t,
        (None, Some(p)) => estimate_theta_sq(&load(settings, "phase1", p)?, m0, &fit)?,
        (None, None) => estimate_theta_sq(&pipeline.phase_one_spec().generate()?, m0, &fit)?,
    };
    let source = ScenarioSource::new(pipeline.calibration_spec())?;
    let sampler = RunLengthSampler::new(&source, m0, theta_sq, &fit, cal_cfg.n_replications, cal_cfg.max_run_length)?;
    let cal = calibrate_q0(&sampler, kappa, &cal_cfg)?;

    create_dir(&a.out)?;
    let mut csv = create_file(&a.out.join("calibration.csv"))?;
    write_calibration_csv(&mut csv, &cal.steps)?;
    csv.flush()?;
    let mut summary = create_file(&a.out.join("calibration.txt"))?;
    write_calibration_summary(&mut summary, &cal, &cal_cfg)?;
    writeln!(summary, "theta_sq = {}", fmt_float(theta_sq))?;
    writeln!(summary, "m0 = {m0}")?;
    summary.flush()?;
    settings.write_sidecar(&a.out.join(SIDECAR))?;
    println!("q0 = {}", cal.q0);
    println!("achieved ARL = {:.3} (sd {:.3}, {} censored)", cal.achieved.arl, cal.achieved.sd, cal.achieved.censored);
    Ok(Outcome::Done)
}

fn bootstrap(settings: &mut Settings, a: CalibrateArgs, manifest: &Path) -> Result<Outcome> {
    let seq = load(settings, "manifest", manifest)?;
    let m0 = settings.get("m0", a.m0, 20usize)?;
    let j_lo = settings.get("j_lo", a.j_lo, m0 + 1)?;
    let j_hi = settings.get("j_hi", a.j_hi, seq.len())?;
    let fit = fit_config(settings, &a.fit)?;
    let theta_sq = match (settings.opt("theta_sq", a.theta_sq)?, &a.phase1) {
        (Some(t), _) => t,
        (None, Some(p)) => estimate_theta_sq(&load(settings, "phase1", p)?, m0, &fit)?,
        (None, None) => estimate_theta_sq(&seq, m0, &fit)?,
    };
    let d = BootstrapConfig::new(m0, (j_lo, j_hi), theta_sq);
    let cfg = BootstrapConfig {
        n_bootstrap: settings.get("n_bootstrap", a.n_bootstrap, d.n_bootstrap)?,
        keep_fraction: settings.get("keep_fraction", a.keep_fraction, d.keep_fraction)?,
        seed: settings.get("seed", a.seed, d.seed)?,
        ..d
    };
    let res = bootstrap_limits(&seq, &cfg, &fit)?;
    create_dir(&a.out)?;
    let mut summary = create_file(&a.out.join("calibration.txt"))?;
    writeln!(summary, "kappa = {}", fmt_float(res.kappa_hat))?;
    writeln!(summary, "q0 = {}", fmt_float(res.q0))?;
    writeln!(summary, "theta_sq = {}", fmt_float(theta_sq))?;
    writeln!(summary, "m0 = {m0}")?;
    writeln!(summary, "n_bootstrap = {}", cfg.n_bootstrap)?;
    summary.flush()?;
    settings.write_sidecar(&a.out.join(SIDECAR))?;
    println!("kappa = {}", res.kappa_hat);
    println!("q0 = {}", res.q0);
    Ok(Outcome::Done)
}

fn eval(settings: &mut Settings, a: EvalArgs) -> Result<Outcome> {
    attach_calibration(settings, a.calibration.as_deref())?;
    let mut spec = scenario_spec(settings, &a.scenario, Regime::InControl, 64)?;
    let regimes = match settings.get("regime", a.regime, "both".to_string())?.as_str() {
        "both" => vec![Regime::InControl, Regime::OutOfControl],
        other => vec![other.parse::<Regime>()?],
    };
    let kappa = settings.get("kappa", a.kappa, spec.scenario.default_kappa())?;
    let q0 = settings.require("q0", a.q0)?;
    let theta_sq = settings.require("theta_sq", a.theta_sq)?;
    let m0 = settings.get("m0", a.m0, 20usize)?;
    let reps = settings.get("reps", a.reps, 50usize)?;
    let horizon = settings.get("horizon", a.horizon, spec.horizon)?;
    spec.horizon = horizon;
    spec.validate()?;
    let max_run_length = settings.get("max_run_length", a.max_run_length, horizon.saturating_sub(m0).max(1))?;
    let seed = settings.get("seed", a.seed, 0u64)?;
    let fit = fit_config(settings, &a.fit)?;
    let mut pipeline = PipelineConfig::new(spec, m0, kappa);
    pipeline.calibration.seed = seed;
    let chart = ChartSettings {
        m0,
        theta_sq,
        kappa,
        q0,
        max_run_length,
    };
    create_dir(&a.out)?;
    let mut summary = create_file(&a.out.join("summary.csv"))?;
    write_summary_header(&mut summary)?;
    for regime in regimes {
        let espec = pipeline.evaluation_spec(regime);
        let report = replicate_experiment(&espec, &chart, reps, &fit)?;
        let mut csv = create_file(&a.out.join(format!("report_{regime}.csv")))?;
        write_report_csv(&mut csv, &report)?;
        csv.flush()?;
        write_summary_row(&mut summary, &espec.scenario.to_string(), &report)?;
        let delay = report
            .mean_delay()
            .map_or_else(String::new, |d| format!(", mean delay {d:.3}"));
        println!(
            "{} {}: ARL {} ({} censored, {} false alarms{delay})",
            espec.scenario,
            regime,
            ortdrift::eval::table_cell(report.arl, report.sd),
            report.censored,
            report.false_alarms
        );
    }
    summary.flush()?;
    settings.write_sidecar(&a.out.join(SIDECAR))?;
    Ok(Outcome::Done)
}
