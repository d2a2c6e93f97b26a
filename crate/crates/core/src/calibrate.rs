//! Choosing the allowance `kappa` and control limit `q0`.
//!
//! Monte Carlo run lengths are computed from cached per-frame residuals:
//! the statistic `lambda` does not depend on `kappa` or `q0`, so every
//! bisection step replays the same trajectories (common random numbers).

use std::io::Write;
use std::sync::Mutex;

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence};
use crate::monitor::{cusum_step, fmt_float, prediction_residual, residual_path, standardized, Residual};
use crate::ort::FitConfig;
use crate::preprocess::impute_missing;
use crate::rng::substream;
use crate::simgen::ScenarioSpec;
use crate::stats;

/// Independent streams to monitor, addressed by replicate and 1-based frame.
pub trait ReplicateSource: Sync {
    fn frame(&self, rep: usize, k: usize) -> Result<ImageFrame>;

    /// Frames per replicate, if bounded.
    fn frames_per_replicate(&self) -> Option<usize>;

    /// Number of replicates available, if bounded.
    fn replicates(&self) -> Option<usize>;
}

/// Replicate `rep` is the scenario generated with `spec.replicate_seed(rep)`.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub spec: ScenarioSpec,
}

impl ScenarioSource {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

impl ReplicateSource for ScenarioSource {
    fn frame(&self, rep: usize, k: usize) -> Result<ImageFrame> {
        self.spec.with_seed(self.spec.replicate_seed(rep)).frame(k)
    }

    fn frames_per_replicate(&self) -> Option<usize> {
        None
    }

    fn replicates(&self) -> Option<usize> {
        None
    }
}

/// A fixed set of recorded streams.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    sequences: Vec<ImageSequence>,
}

impl SequenceSource {
    pub fn new(sequences: Vec<ImageSequence>) -> Self {
        Self { sequences }
    }
}

impl ReplicateSource for SequenceSource {
    fn frame(&self, rep: usize, k: usize) -> Result<ImageFrame> {
        let seq = self.sequences.get(rep).ok_or(Error::IndexOutOfRange {
            index: rep,
            len: self.sequences.len(),
        })?;
        if k == 0 {
            return Err(Error::IndexOutOfRange { index: 0, len: seq.len() });
        }
        seq.get(k - 1).cloned()
    }

    fn frames_per_replicate(&self) -> Option<usize> {
        Some(self.sequences.iter().map(ImageSequence::len).min().unwrap_or(0))
    }

    fn replicates(&self) -> Option<usize> {
        Some(self.sequences.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub arl0: f64,
    pub n_replications: usize,
    /// Runs without a signal after this many monitored frames are censored.
    pub max_run_length: usize,
    pub q0_bracket: (f64, f64),
    pub tolerance: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl CalibrationConfig {
    /// Defaults for a target in-control ARL; censoring at `10 * arl0`.
    pub fn for_arl(arl0: f64) -> Self {
        Self {
            arl0,
            max_run_length: (10.0 * arl0).ceil().max(1.0) as usize,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.q0_bracket;
        if !(self.arl0.is_finite() && self.arl0 >= 1.0) {
            return Err(Error::config("arl0 must be at least 1"));
        }
        if self.n_replications == 0 || self.max_run_length == 0 {
            return Err(Error::config("n_replications and max_run_length must be positive"));
        }
        if !(low > 0.0 && low < high && high.is_finite()) {
            return Err(Error::config(format!("invalid q0 bracket ({low}, {high})")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        Ok(())
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            arl0: 20.0,
            n_replications: 100,
            max_run_length: 200,
            q0_bracket: (0.01, 100.0),
            tolerance: 0.5,
            max_steps: 30,
            seed: 0,
        }
    }
}

/// Lazily extended residual trajectories, one per replicate.
pub struct RunLengthSampler<'a, S: ReplicateSource + ?Sized> {
    source: &'a S,
    m0: usize,
    theta_sq: f64,
    n_eff: f64,
    fit: FitConfig,
    max_run_length: usize,
    paths: Vec<Mutex<Vec<Residual>>>,
}

impl<'a, S: ReplicateSource + ?Sized> RunLengthSampler<'a, S> {
    pub fn new(
        source: &'a S,
        m0: usize,
        theta_sq: f64,
        fit: &FitConfig,
        n_replications: usize,
        max_run_length: usize,
    ) -> Result<Self> {
        if !(theta_sq.is_finite() && theta_sq > 0.0) {
            return Err(Error::NonPositiveTheta(theta_sq));
        }
        if m0 < 2 || n_replications == 0 || max_run_length == 0 {
            return Err(Error::config("m0 >= 2, n_replications >= 1 and max_run_length >= 1 are required"));
        }
        fit.validate()?;
        if let Some(len) = source.frames_per_replicate() {
            if len < m0 + max_run_length {
                return Err(Error::SequenceTooShort {
                    needed: m0 + max_run_length,
                    found: len,
                });
            }
        }
        if let Some(reps) = source.replicates() {
            if reps < n_replications {
                return Err(Error::config(format!("{n_replications} replications requested, {reps} available")));
            }
        }
        let n_eff = source.frame(0, 1)?.lattice().n_eff();
        Ok(Self {
            source,
            m0,
            theta_sq,
            n_eff,
            fit: fit.clone(),
            max_run_length,
            paths: (0..n_replications).map(|_| Mutex::new(Vec::new())).collect(),
        })
    }

    pub fn n_replications(&self) -> usize {
        self.paths.len()
    }

    pub fn max_run_length(&self) -> usize {
        self.max_run_length
    }

    /// Residual of the `step`-th monitored frame (0-based) of replicate `rep`.
    fn residual(&self, path: &mut Vec<Residual>, rep: usize, step: usize) -> Result<Residual> {
        while path.len() <= step {
            let k = self.m0 + path.len() + 1;
            let frames = (k - self.m0..=k)
                .map(|j| self.source.frame(rep, j))
                .collect::<Result<Vec<_>>>()?;
            let (target, window) = frames.split_last().expect("window is nonempty");
            path.push(prediction_residual(window, target, &self.fit)?);
        }
        Ok(path[step])
    }

    /// Monitored frames until the first signal, and whether the run was
    /// censored at `max_run_length`.
    pub fn run_length(&self, rep: usize, kappa: f64, q0: f64) -> Result<(usize, bool)> {
        let mut path = self.paths[rep].lock().unwrap_or_else(|e| e.into_inner());
        let mut q = 0.0;
        for step in 0..self.max_run_length {
            let r = self.residual(&mut path, rep, step)?;
            q = cusum_step(q, standardized(r.lambda(self.theta_sq)?, self.n_eff) - kappa);
            if q > q0 {
                return Ok((step + 1, false));
            }
        }
        Ok((self.max_run_length, true))
    }

    pub fn run_lengths(&self, kappa: f64, q0: f64) -> Result<Vec<(usize, bool)>> {
        (0..self.n_replications())
            .into_par_iter()
            .map(|rep| self.run_length(rep, kappa, q0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArlEstimate {
    pub arl: f64,
    pub sd: f64,
    pub censored: usize,
    pub run_lengths: Vec<usize>,
}

impl ArlEstimate {
    pub fn from_runs(runs: &[(usize, bool)]) -> Self {
        let values: Vec<f64> = runs.iter().map(|&(r, _)| r as f64).collect();
        Self {
            arl: stats::mean(&values),
            sd: stats::sample_sd(&values),
            censored: runs.iter().filter(|r| r.1).count(),
            run_lengths: runs.iter().map(|r| r.0).collect(),
        }
    }
}

/// Mean and SD of in-control run lengths; censored runs count as
/// `max_run_length`.
pub fn estimate_arl<S: ReplicateSource + ?Sized>(
    sampler: &RunLengthSampler<'_, S>,
    kappa: f64,
    q0: f64,
) -> Result<ArlEstimate> {
    Ok(ArlEstimate::from_runs(&sampler.run_lengths(kappa, q0)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationStep {
    pub q0: f64,
    pub arl: f64,
    pub sd: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub kappa: f64,
    pub q0: f64,
    pub achieved: ArlEstimate,
    pub steps: Vec<CalibrationStep>,
}

/// Bisection on `q0` (at the geometric midpoint of the bracket) until the
/// achieved ARL is within `tolerance` of `arl0`. Returns the evaluated `q0`
/// closest to the target if the step budget runs out.
pub fn calibrate_q0<S: ReplicateSource + ?Sized>(
    sampler: &RunLengthSampler<'_, S>,
    kappa: f64,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    cfg.validate()?;
    let mut steps = Vec::new();
    let mut best: Option<(f64, ArlEstimate)> = None;
    let mut eval = |q0: f64, steps: &mut Vec<CalibrationStep>| -> Result<ArlEstimate> {
        let est = estimate_arl(sampler, kappa, q0)?;
        steps.push(CalibrationStep {
            q0,
            arl: est.arl,
            sd: est.sd,
            censored: est.censored,
        });
        let closer = best
            .as_ref()
            .is_none_or(|(_, b)| (est.arl - cfg.arl0).abs() <= (b.arl - cfg.arl0).abs());
        if closer {
            best = Some((q0, est.clone()));
        }
        Ok(est)
    };
    let (mut low, mut high) = cfg.q0_bracket;
    let at_low = eval(low, &mut steps)?;
    if at_low.arl > cfg.arl0 + cfg.tolerance {
        let at_high = estimate_arl(sampler, kappa, high)?;
        return Err(Error::Bracket {
            low,
            high,
            arl_low: at_low.arl,
            arl_high: at_high.arl,
            target: cfg.arl0,
        });
    }
    let mut reached = (at_low.arl - cfg.arl0).abs() <= cfg.tolerance;
    let mut above = false;
    for _ in 0..cfg.max_steps {
        if reached {
            break;
        }
        let mid = (low * high).sqrt();
        let est = eval(mid, &mut steps)?;
        reached = (est.arl - cfg.arl0).abs() <= cfg.tolerance;
        if est.arl < cfg.arl0 {
            low = mid;
        } else {
            above = true;
            high = mid;
        }
    }
    if !reached && !above {
        let at_high = eval(cfg.q0_bracket.1, &mut steps)?;
        if at_high.arl < cfg.arl0 - cfg.tolerance {
            return Err(Error::Bracket {
                low: cfg.q0_bracket.0,
                high: cfg.q0_bracket.1,
                arl_low: at_low.arl,
                arl_high: at_high.arl,
                target: cfg.arl0,
            });
        }
    }
    let (q0, achieved) = best.expect("at least one evaluation");
    Ok(Calibration {
        kappa,
        q0,
        achieved,
        steps,
    })
}

pub const CALIBRATION_HEADER: &str = "q0,arl,sd,censored";

pub fn write_calibration_csv(mut out: impl Write, steps: &[CalibrationStep]) -> std::io::Result<()> {
    writeln!(out, "{CALIBRATION_HEADER}")?;
    for s in steps {
        writeln!(out, "{},{},{},{}", fmt_float(s.q0), fmt_float(s.arl), fmt_float(s.sd), s.censored)?;
    }
    Ok(())
}

/// `key = value` lines describing the chosen limits.
pub fn write_calibration_summary(mut out: impl Write, cal: &Calibration, cfg: &CalibrationConfig) -> std::io::Result<()> {
    writeln!(out, "kappa = {}", fmt_float(cal.kappa))?;
    writeln!(out, "q0 = {}", fmt_float(cal.q0))?;
    writeln!(out, "arl0 = {}", fmt_float(cfg.arl0))?;
    writeln!(out, "achieved_arl = {}", fmt_float(cal.achieved.arl))?;
    writeln!(out, "achieved_sd = {}", fmt_float(cal.achieved.sd))?;
    writeln!(out, "censored = {}", cal.achieved.censored)?;
    writeln!(out, "n_replications = {}", cfg.n_replications)?;
    writeln!(out, "max_run_length = {}", cfg.max_run_length)?;
    writeln!(out, "steps = {}", cal.steps.len())
}

/// `mean + z_0.95 * sd` of the pooled CUSUM values.
pub fn quantile_q0(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: values.len(),
        });
    }
    Ok(stats::mean(values) + stats::Z_95 * stats::sample_sd(values))
}

/// Average over paths of the mean of `Q_j / j` for `j` in `j_lo..=j_hi`,
/// where `paths[i][j - 1]` is `Q` at frame `j` of sample `i`.
pub fn kappa_from_paths(paths: &[Vec<f64>], j_lo: usize, j_hi: usize) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::config("at least one bootstrap sample is required"));
    }
    if j_lo == 0 || j_lo > j_hi {
        return Err(Error::config(format!("empty frame range [{j_lo}, {j_hi}]")));
    }
    let per_path = paths
        .iter()
        .map(|p| {
            if p.len() < j_hi {
                return Err(Error::SequenceTooShort {
                    needed: j_hi,
                    found: p.len(),
                });
            }
            Ok(stats::mean(&(j_lo..=j_hi).map(|j| p[j - 1] / j as f64).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stats::mean(&per_path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub m0: usize,
    pub n_bootstrap: usize,
    pub keep_fraction: f64,
    /// Inclusive 1-based frame range averaged over.
    pub j_range: (usize, usize),
    pub theta_sq: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(m0: usize, j_range: (usize, usize), theta_sq: f64) -> Self {
        Self {
            m0,
            n_bootstrap: 50,
            keep_fraction: 0.8,
            j_range,
            theta_sq,
            seed: 0,
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        let (lo, hi) = self.j_range;
        if self.n_bootstrap == 0 {
            return Err(Error::config("n_bootstrap must be at least 1"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::config("keep_fraction must lie in (0, 1]"));
        }
        if lo > hi || lo <= self.m0 {
            return Err(Error::config(format!(
                "frame range [{lo}, {hi}] must be nonempty and start after the first {} frames",
                self.m0
            )));
        }
        if hi > len {
            return Err(Error::SequenceTooShort { needed: hi, found: len });
        }
        if !(self.theta_sq.is_finite() && self.theta_sq > 0.0) {
            return Err(Error::NonPositiveTheta(self.theta_sq));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub kappa_hat: f64,
    pub q0: f64,
    /// Pooled `Q_{i,j}` over samples and the frame range, at `kappa_hat`.
    pub q_values: Vec<f64>,
}

/// Random subsample of the first `len` frames (first and last always
/// kept) with the dropped frames re-imputed at their own times.
pub fn bootstrap_sample(seq: &ImageSequence, len: usize, keep_fraction: f64, seed: u64, i: usize) -> Result<ImageSequence> {
    let head = seq.slice(0..len)?;
    if len <= 2 {
        return Ok(head);
    }
    let inner = len - 2;
    let keep = ((keep_fraction * inner as f64).round() as usize).min(inner);
    let mut rng = substream(seed, i as u64);
    let mut picked: Vec<usize> = index::sample(&mut rng, inner, keep).into_iter().map(|p| p + 1).collect();
    picked.push(0);
    picked.push(len - 1);
    picked.sort_unstable();
    let frames = picked.iter().map(|&p| head.frames()[p].clone()).collect();
    impute_missing(&ImageSequence::new(frames)?, &head.times())
}

/// CUSUM path over all frames of `seq` (zero before monitoring starts).
fn q_path(residuals: &[Residual], m0: usize, theta_sq: f64, n_eff: f64, kappa: f64) -> Result<Vec<f64>> {
    let mut path = vec![0.0; m0];
    let mut q = 0.0;
    for r in residuals {
        q = cusum_step(q, standardized(r.lambda(theta_sq)?, n_eff) - kappa);
        path.push(q);
    }
    Ok(path)
}

/// Bootstrap allowance `kappa_hat` and control limit `q0` for an observed
/// in-control sequence.
pub fn bootstrap_limits(seq: &ImageSequence, cfg: &BootstrapConfig, fit: &FitConfig) -> Result<BootstrapResult> {
    let (j_lo, j_hi) = cfg.j_range;
    cfg.validate(seq.len())?;
    let n_eff = seq.frames()[0].lattice().n_eff();
    let residuals = (0..cfg.n_bootstrap)
        .into_par_iter()
        .map(|i| {
            let sample = bootstrap_sample(seq, j_hi, cfg.keep_fraction, cfg.seed, i)?;
            residual_path(&sample, cfg.m0, fit)
        })
        .collect::<Result<Vec<_>>>()?;
    let free = residuals
        .iter()
        .map(|r| q_path(r, cfg.m0, cfg.theta_sq, n_eff, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let kappa_hat = kappa_from_paths(&free, j_lo, j_hi)?;
    let mut q_values = Vec::with_capacity(cfg.n_bootstrap * (j_hi - j_lo + 1));
    for r in &residuals {
        let path = q_path(r, cfg.m0, cfg.theta_sq, n_eff, kappa_hat)?;
        q_values.extend_from_slice(&path[j_lo - 1..j_hi]);
    }
    Ok(BootstrapResult {
        kappa_hat,
        q0: quantile_q0(&q_values)?,
        q_values,
    })
}

/// The allowance part of [`bootstrap_limits`].
pub fn bootstrap_kappa(seq: &ImageSequence, cfg: &BootstrapConfig, fit: &FitConfig) -> Result<f64> {
    bootstrap_limits(seq, cfg, fit).map(|b| b.kappa_hat)
}
