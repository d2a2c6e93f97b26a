//! Run-length experiments, detection delays and the null diagnostic.

use std::io::Write;

use rayon::prelude::*;

use crate::calibrate::{calibrate_q0, Calibration, CalibrationConfig, CalibrationStep, RunLengthSampler, ScenarioSource};
use crate::error::{Error, Result};
use crate::monitor::{estimate_theta_sq, fmt_float, residual_path, standardized};
use crate::ort::FitConfig;
use crate::rng::derive_seed;
use crate::simgen::{Regime, ScenarioSpec};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub seed: u64,
    /// Monitored frames up to the signal, or the censoring bound.
    pub run_length: usize,
    pub censored: bool,
    /// Signal time minus change time, for OC signals after the change.
    pub delay: Option<f64>,
    pub false_alarm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthReport {
    pub regime: Regime,
    pub outcomes: Vec<ReplicateOutcome>,
    pub arl: f64,
    pub sd: f64,
    pub censored: usize,
    pub detection_delays: Vec<f64>,
    pub false_alarms: usize,
}

impl RunLengthReport {
    pub fn run_lengths(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.run_length).collect()
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (!self.detection_delays.is_empty()).then(|| stats::mean(&self.detection_delays))
    }

    pub fn false_alarm_fraction(&self) -> f64 {
        self.false_alarms as f64 / self.outcomes.len().max(1) as f64
    }

    fn from_outcomes(regime: Regime, outcomes: Vec<ReplicateOutcome>) -> Self {
        let rl: Vec<f64> = outcomes.iter().map(|o| o.run_length as f64).collect();
        Self {
            regime,
            arl: stats::mean(&rl),
            sd: stats::sample_sd(&rl),
            censored: outcomes.iter().filter(|o| o.censored).count(),
            detection_delays: outcomes.iter().filter_map(|o| o.delay).collect(),
            false_alarms: outcomes.iter().filter(|o| o.false_alarm).count(),
            outcomes,
        }
    }
}

/// Monitor settings shared by every replicate of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSettings {
    pub m0: usize,
    pub theta_sq: f64,
    pub kappa: f64,
    pub q0: f64,
    pub max_run_length: usize,
}

/// Runs the monitor on `n_reps` replicates of `spec` (seeded from
/// `spec.seed`). In the OC regime, signals at or before the change are
/// false alarms and the rest contribute a detection delay; in the IC regime
/// every signal is a false alarm.
pub fn replicate_experiment(
    spec: &ScenarioSpec,
    chart: &ChartSettings,
    n_reps: usize,
    fit: &FitConfig,
) -> Result<RunLengthReport> {
    if !(chart.q0 > 0.0) {
        return Err(Error::config("q0 must be positive"));
    }
    let source = ScenarioSource::new(spec.clone())?;
    let sampler = RunLengthSampler::new(&source, chart.m0, chart.theta_sq, fit, n_reps, chart.max_run_length)?;
    let runs = sampler.run_lengths(chart.kappa, chart.q0)?;
    let outcomes = runs
        .into_iter()
        .enumerate()
        .map(|(rep, (run_length, censored))| {
            let signal_time = (chart.m0 + run_length) as f64;
            let (delay, false_alarm) = match (censored, spec.regime) {
                (true, _) => (None, false),
                (false, Regime::InControl) => (None, true),
                (false, Regime::OutOfControl) if signal_time <= spec.change_time => (None, true),
                (false, Regime::OutOfControl) => (Some(signal_time - spec.change_time), false),
            };
            ReplicateOutcome {
                rep,
                seed: spec.replicate_seed(rep),
                run_length,
                censored,
                delay,
                false_alarm,
            }
        })
        .collect();
    Ok(RunLengthReport::from_outcomes(spec.regime, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityDiagnostic {
    pub mean: f64,
    pub variance: f64,
    pub ks_distance: f64,
}

pub const MIN_DIAGNOSTIC_VALUES: usize = 100;

/// Sample mean, variance and Kolmogorov-Smirnov distance to `N(0, 1)`.
pub fn normality_diagnostic(values: &[f64]) -> Result<NormalityDiagnostic> {
    if values.len() < MIN_DIAGNOSTIC_VALUES {
        return Err(Error::TooFewPoints {
            needed: MIN_DIAGNOSTIC_VALUES,
            found: values.len(),
        });
    }
    Ok(NormalityDiagnostic {
        mean: stats::mean(values),
        variance: stats::variance(values),
        ks_distance: stats::ks_distance_normal(values),
    })
}

/// Standardized increments `(n_eff / sqrt 2)(lambda - 1)` of every monitored
/// frame of `n_reps` in-control replicates of `spec`.
pub fn ic_increments(spec: &ScenarioSpec, m0: usize, theta_sq: f64, n_reps: usize, fit: &FitConfig) -> Result<Vec<f64>> {
    let ic = spec.with_regime(Regime::InControl);
    let n_eff = crate::model::Lattice::square(ic.n)?.n_eff();
    let per_rep = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let seq = ic.with_seed(ic.replicate_seed(rep)).generate()?;
            residual_path(&seq, m0, fit)?
                .iter()
                .map(|r| Ok(standardized(r.lambda(theta_sq)?, n_eff)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.concat())
}

pub const REPORT_HEADER: &str = "rep,seed,regime,run_length,censored,delay";

pub fn write_report_csv(mut out: impl Write, report: &RunLengthReport) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for o in &report.outcomes {
        let delay = o.delay.map(fmt_float).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            o.rep,
            o.seed,
            report.regime,
            o.run_length,
            u8::from(o.censored),
            delay
        )?;
    }
    Ok(())
}

/// `"arl (sd)"` with three decimals.
pub fn table_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.3} ({sd:.3})")
}

pub const SUMMARY_HEADER: &str = "label,regime,n_reps,arl,sd,censored,false_alarms,mean_delay,delay_sd,cell";

pub fn write_summary_header(mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")
}

pub fn write_summary_row(mut out: impl Write, label: &str, report: &RunLengthReport) -> std::io::Result<()> {
    let (delay, delay_sd) = match report.mean_delay() {
        Some(d) => (fmt_float(d), fmt_float(stats::sample_sd(&report.detection_delays))),
        None => (String::new(), String::new()),
    };
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        label,
        report.regime,
        report.outcomes.len(),
        fmt_float(report.arl),
        fmt_float(report.sd),
        report.censored,
        report.false_alarms,
        delay,
        delay_sd,
        table_cell(report.arl, report.sd)
    )
}

/// Seed labels of the independent stages of [`run_pipeline`].
const PHASE_ONE_LABEL: u64 = 1;
const CALIBRATION_LABEL: u64 = 2;
const EVALUATION_LABEL: u64 = 3;

/// End-to-end desk-scale experiment for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Scenario geometry and noise; its regime and seed are ignored. Runs
    /// are censored at `spec.horizon` (monitoring ends with the stream).
    pub spec: ScenarioSpec,
    pub m0: usize,
    pub kappa: f64,
    /// Frames of the in-control Phase-I sequence used to estimate `theta_sq`.
    pub phase_one_frames: usize,
    pub calibration: CalibrationConfig,
    pub eval_reps: usize,
    pub fit: FitConfig,
}

impl PipelineConfig {
    pub fn new(spec: ScenarioSpec, m0: usize, kappa: f64) -> Self {
        let calibration = CalibrationConfig {
            max_run_length: spec.horizon.saturating_sub(m0).max(1),
            ..CalibrationConfig::default()
        };
        Self {
            spec,
            m0,
            kappa,
            phase_one_frames: 40,
            calibration,
            eval_reps: 50,
            fit: FitConfig::default(),
        }
    }

    fn stage(&self, label: u64, regime: Regime) -> ScenarioSpec {
        ScenarioSpec {
            regime,
            seed: derive_seed(self.calibration.seed, label),
            ..self.spec.clone()
        }
    }

    /// In-control Phase-I sequence.
    pub fn phase_one_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            horizon: self.m0 + self.phase_one_frames,
            ..self.stage(PHASE_ONE_LABEL, Regime::InControl)
        }
    }

    /// In-control replicates the limit is calibrated on.
    pub fn calibration_spec(&self) -> ScenarioSpec {
        self.stage(CALIBRATION_LABEL, Regime::InControl)
    }

    /// Evaluation replicates; IC and OC share seeds.
    pub fn evaluation_spec(&self, regime: Regime) -> ScenarioSpec {
        self.stage(EVALUATION_LABEL, regime)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub theta_sq: f64,
    pub calibration: Calibration,
    /// Set when no limit in the bracket reaches the target ARL and the
    /// lower end of the bracket was used instead.
    pub bracket_floor: bool,
    pub ic: RunLengthReport,
    pub oc: RunLengthReport,
}

/// `theta_sq` from Phase I, `q0` by bisection, then IC and OC evaluation.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let theta_sq = estimate_theta_sq(&cfg.phase_one_spec().generate()?, cfg.m0, &cfg.fit)?;
    let cal_cfg = &cfg.calibration;
    let source = ScenarioSource::new(cfg.calibration_spec())?;
    let sampler = RunLengthSampler::new(
        &source,
        cfg.m0,
        theta_sq,
        &cfg.fit,
        cal_cfg.n_replications,
        cal_cfg.max_run_length,
    )?;
    let (calibration, bracket_floor) = match calibrate_q0(&sampler, cfg.kappa, cal_cfg) {
        Ok(c) => (c, false),
        Err(Error::Bracket {
            low, arl_low, target, ..
        }) if arl_low > target => {
            let achieved = crate::calibrate::estimate_arl(&sampler, cfg.kappa, low)?;
            let step = CalibrationStep {
                q0: low,
                arl: achieved.arl,
                sd: achieved.sd,
                censored: achieved.censored,
            };
            let cal = Calibration {
                kappa: cfg.kappa,
                q0: low,
                achieved,
                steps: vec![step],
            };
            (cal, true)
        }
        Err(e) => return Err(e),
    };
    let chart = ChartSettings {
        m0: cfg.m0,
        theta_sq,
        kappa: cfg.kappa,
        q0: calibration.q0,
        max_run_length: cal_cfg.max_run_length,
    };
    let ic = replicate_experiment(&cfg.evaluation_spec(Regime::InControl), &chart, cfg.eval_reps, &cfg.fit)?;
    let oc = replicate_experiment(&cfg.evaluation_spec(Regime::OutOfControl), &chart, cfg.eval_reps, &cfg.fit)?;
    Ok(PipelineOutcome {
        theta_sq,
        calibration,
        bracket_floor,
        ic,
        oc,
    })
}
