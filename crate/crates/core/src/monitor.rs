//! Phase-II monitoring: each new frame is predicted from the trailing
//! window, its lack of fit is measured by the statistic `lambda`, and a
//! one-sided CUSUM of the standardized `lambda` raises the signal.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence};
use crate::ort::{fit_frames, FitConfig};
use crate::predict::{denoise_frame, partition_at};
use crate::stats;

/// Squared prediction error of one frame and its degrees of freedom
/// (`pixels - nonempty leaves`). Independent of `theta_sq`, `kappa`, `q0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub sse: f64,
    pub dof: usize,
}

impl Residual {
    pub fn mse(&self) -> f64 {
        self.sse / self.dof as f64
    }

    pub fn lambda(&self, theta_sq: f64) -> Result<f64> {
        check_theta(theta_sq)?;
        Ok(self.sse / (self.dof as f64 * theta_sq))
    }
}

fn check_theta(theta_sq: f64) -> Result<()> {
    if theta_sq.is_finite() && theta_sq > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveTheta(theta_sq))
    }
}

/// Sum of squared differences between two frames of equal size.
fn sse(a: &ImageFrame, b: &ImageFrame) -> Result<f64> {
    b.check_dims(a.dims())?;
    Ok(stats::sum(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y))))
}

/// `sum (denoised - observed)^2 / ((pixels - k) * theta_sq)`.
pub fn lambda_stat(observed: &ImageFrame, denoised: &ImageFrame, k: usize, theta_sq: f64) -> Result<f64> {
    let pixels = observed.data().len();
    if k >= pixels {
        return Err(Error::DegenerateDof { leaves: k, pixels });
    }
    check_theta(theta_sq)?;
    Ok(sse(observed, denoised)? / ((pixels - k) as f64 * theta_sq))
}

/// Fits on `window`, partitions `frame` at its own time and measures how
/// well leaf averaging explains it.
pub fn prediction_residual(window: &[ImageFrame], frame: &ImageFrame, cfg: &FitConfig) -> Result<Residual> {
    let tree = fit_frames(window, cfg)?;
    let part = partition_at(&tree, frame.dims(), frame.time())?;
    let denoised = denoise_frame(frame, &part)?;
    let pixels = frame.data().len();
    let k = part.nonempty_leaf_count();
    if k >= pixels {
        return Err(Error::DegenerateDof { leaves: k, pixels });
    }
    Ok(Residual {
        sse: sse(frame, &denoised)?,
        dof: pixels - k,
    })
}

/// `(n_eff / sqrt 2) (lambda - 1)`, approximately standard normal in control.
#[inline]
pub fn standardized(lambda: f64, n_eff: f64) -> f64 {
    n_eff / std::f64::consts::SQRT_2 * (lambda - 1.0)
}

/// One CUSUM step: `max(0, q + increment)`.
#[inline]
pub fn cusum_step(q: f64, increment: f64) -> f64 {
    (q + increment).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartRecord {
    /// 1-based position of the frame in its stream.
    pub k: usize,
    pub t: f64,
    pub lambda: f64,
    /// Standardized lambda minus the allowance.
    pub increment: f64,
    /// CUSUM after this frame.
    pub q: f64,
    pub signaled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState {
    theta_sq: f64,
    kappa: f64,
    q0: f64,
    m0: usize,
    q: f64,
    history: Vec<ChartRecord>,
}

impl MonitorState {
    pub fn new(theta_sq: f64, kappa: f64, q0: f64, m0: usize) -> Result<Self> {
        check_theta(theta_sq)?;
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::config(format!("kappa must be a nonnegative number, got {kappa}")));
        }
        if !(q0 > 0.0) {
            return Err(Error::config(format!("q0 must be positive, got {q0}")));
        }
        if m0 < 2 {
            return Err(Error::config("m0 must be at least 2"));
        }
        Ok(Self {
            theta_sq,
            kappa,
            q0,
            m0,
            q: 0.0,
            history: Vec::new(),
        })
    }

    pub fn theta_sq(&self) -> f64 {
        self.theta_sq
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    /// Current CUSUM value.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn history(&self) -> &[ChartRecord] {
        &self.history
    }

    /// Restarts the chart at `Q = 0` with an empty history.
    pub fn reset(&mut self) {
        self.q = 0.0;
        self.history.clear();
    }

    /// Feeds one value of lambda into the CUSUM and records the step.
    pub fn update(&mut self, k: usize, t: f64, lambda: f64, n_eff: f64) -> ChartRecord {
        let increment = standardized(lambda, n_eff) - self.kappa;
        self.q = cusum_step(self.q, increment);
        let record = ChartRecord {
            k,
            t,
            lambda,
            increment,
            q: self.q,
            signaled: self.q > self.q0,
        };
        self.history.push(record);
        record
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRun {
    pub history: Vec<ChartRecord>,
    /// 1-based stream position of the first signal.
    pub first_signal: Option<usize>,
}

impl MonitorRun {
    /// Frames monitored up to and including the first signal.
    pub fn run_length(&self, m0: usize) -> Option<usize> {
        self.first_signal.map(|k| k - m0)
    }
}

/// Monitors every frame after the first `m0`, stopping at the first signal
/// unless `continue_after_signal` is set.
pub fn run_monitor(
    stream: &ImageSequence,
    state: &mut MonitorState,
    cfg: &FitConfig,
    continue_after_signal: bool,
) -> Result<MonitorRun> {
    let m0 = state.m0;
    if stream.len() < m0 + 1 {
        return Err(Error::SequenceTooShort {
            needed: m0 + 1,
            found: stream.len(),
        });
    }
    let frames = stream.frames();
    let n_eff = frames[0].lattice().n_eff();
    let start = state.history.len();
    let mut first_signal = None;
    for idx in m0..frames.len() {
        let r = prediction_residual(&frames[idx - m0..idx], &frames[idx], cfg)?;
        let rec = state.update(idx + 1, frames[idx].time(), r.lambda(state.theta_sq)?, n_eff);
        if rec.signaled && first_signal.is_none() {
            first_signal = Some(rec.k);
            if !continue_after_signal {
                break;
            }
        }
    }
    Ok(MonitorRun {
        history: state.history[start..].to_vec(),
        first_signal,
    })
}

/// Per-frame prediction residuals of every frame after the first `m0`.
pub fn residual_path(seq: &ImageSequence, m0: usize, cfg: &FitConfig) -> Result<Vec<Residual>> {
    if seq.len() <= m0 {
        return Err(Error::SequenceTooShort {
            needed: m0 + 1,
            found: seq.len(),
        });
    }
    let frames = seq.frames();
    (m0..frames.len())
        .into_par_iter()
        .map(|idx| prediction_residual(&frames[idx - m0..idx], &frames[idx], cfg))
        .collect()
}

/// Average per-degree-of-freedom prediction MSE over the frames after the
/// first `m0` of an in-control sequence.
pub fn estimate_theta_sq(ic_sequence: &ImageSequence, m0: usize, cfg: &FitConfig) -> Result<f64> {
    if m0 < 2 {
        return Err(Error::config("m0 must be at least 2"));
    }
    let path = residual_path(ic_sequence, m0, cfg)?;
    let mses: Vec<f64> = path.iter().map(Residual::mse).collect();
    Ok(stats::mean(&mses))
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CHART_HEADER: &str = "k,t,lambda,increment,Q,signal";

pub fn write_chart_csv(mut out: impl Write, records: &[ChartRecord]) -> std::io::Result<()> {
    writeln!(out, "{CHART_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            fmt_float(r.t),
            fmt_float(r.lambda),
            fmt_float(r.increment),
            fmt_float(r.q),
            u8::from(r.signaled)
        )?;
    }
    Ok(())
}
