//! The five synthetic drift scenarios.
//!
//! Geometry is expressed in pixels so that a reduced resolution keeps every
//! edge on the same lattice position relative to the frame; at `n = 128`
//! the formulas are the literal ones (`t/128`, `(t+20)/512`, `5/128`, ...).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence};
use crate::rng::{derive_seed, standard_normal, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Vertical edge drifting right one pixel per step.
    S1,
    /// Square growing a quarter pixel per step on each side.
    S2,
    /// Small square moving right half a pixel per step.
    S3,
    /// Static square; grows by 5 pixels at the change.
    S4,
    /// Static square whose contrast fades linearly.
    S5,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Self::S1, Self::S2, Self::S3, Self::S4, Self::S5];

    /// Allowance used for this scenario unless overridden.
    pub fn default_kappa(self) -> f64 {
        match self {
            Self::S1 => 0.9,
            Self::S2 => 2.0,
            Self::S3 => 0.7,
            Self::S4 => 2.0,
            Self::S5 => 0.7,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::S1 => "s1",
            Self::S2 => "s2",
            Self::S3 => "s3",
            Self::S4 => "s4",
            Self::S5 => "s5",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Self::S1),
            "s2" | "2" => Ok(Self::S2),
            "s3" | "3" => Ok(Self::S3),
            "s4" | "4" => Ok(Self::S4),
            "s5" | "5" => Ok(Self::S5),
            _ => Err(Error::config(format!("unknown scenario {s:?} (expected s1..s5)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    InControl,
    OutOfControl,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InControl => "ic",
            Self::OutOfControl => "oc",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ic" => Ok(Self::InControl),
            "oc" => Ok(Self::OutOfControl),
            _ => Err(Error::config(format!("unknown regime {s:?} (expected ic or oc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub sigma: f64,
    pub change_time: f64,
    pub regime: Regime,
    /// Frames are generated at `t = 1..=horizon`.
    pub horizon: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, regime: Regime) -> Self {
        Self {
            scenario,
            n: 128,
            sigma: 0.15,
            change_time: 20.0,
            regime,
            horizon: 60,
            alpha: 0.005,
            beta: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n must be at least 2"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma must be a nonnegative number"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.change_time.is_nan() || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::config("change_time, alpha and beta must be numbers"));
        }
        Ok(())
    }

    /// The same scenario with another regime and seed.
    pub fn with_regime(&self, regime: Regime) -> Self {
        Self { regime, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Seed of replicate `rep` in an experiment seeded by `self.seed`.
    pub fn replicate_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }

    /// Noise-free intensity at `(x, y)` and time `t`.
    pub fn true_intensity(&self, x: f64, y: f64, t: f64) -> f64 {
        let n = self.n as f64;
        let after = self.regime == Regime::OutOfControl && t > self.change_time;
        // Drift time: doubles after the change in the OC regime.
        let td = if after { t + t } else { t };
        let ind = |b: bool| f64::from(u8::from(b));
        match self.scenario {
            Scenario::S1 => ind(x > td / n),
            Scenario::S2 => ind((x - 0.5).abs().max((y - 0.5).abs()) > (20.0 + td) / (4.0 * n)),
            Scenario::S3 => ind((x - td / (2.0 * n)).abs().max((y - 0.5).abs()) > 5.0 / n),
            Scenario::S4 => {
                let grow = if after { 5.0 / n } else { 0.0 };
                let (lo, hi) = (0.25 - grow, 0.75 + grow);
                ind(!(lo <= x && x <= hi && lo <= y && y <= hi))
            }
            Scenario::S5 => {
                let level = if after { 2.0 * t * self.alpha } else { t * self.alpha };
                level + (self.beta - t * self.alpha) * ind(x.max(y) > (n - 14.0) / n)
            }
        }
    }

    /// Noiseless frame at time `t`.
    pub fn true_frame(&self, t: f64) -> Result<ImageFrame> {
        ImageFrame::from_fn(self.n, self.n, t, |x, y| self.true_intensity(x, y, t))
    }

    /// Observed frame number `k` (time `t = k`, `k >= 1`). Noise depends
    /// only on `(seed, k)`, so IC and OC frames share it.
    pub fn frame(&self, k: usize) -> Result<ImageFrame> {
        let t = k as f64;
        let mut rng = substream(self.seed, k as u64);
        let sigma = self.sigma;
        ImageFrame::from_fn(self.n, self.n, t, |x, y| {
            self.true_intensity(x, y, t) + sigma * standard_normal(&mut rng)
        })
    }

    pub fn generate(&self) -> Result<ImageSequence> {
        generate_sequence(self)
    }
}

pub fn true_intensity(spec: &ScenarioSpec, x: f64, y: f64, t: f64) -> f64 {
    spec.true_intensity(x, y, t)
}

/// Frames at `t = 1..=horizon` with i.i.d. Gaussian noise.
pub fn generate_sequence(spec: &ScenarioSpec) -> Result<ImageSequence> {
    spec.validate()?;
    let frames = (1..=spec.horizon).map(|k| spec.frame(k)).collect::<Result<Vec<_>>>()?;
    ImageSequence::new(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: Scenario, r: Regime) -> ScenarioSpec {
        ScenarioSpec::new(s, r)
    }

    #[test]
    fn literal_values_at_full_scale() {
        let ic = spec(Scenario::S1, Regime::InControl);
        assert_eq!(ic.true_intensity(1.0 / 128.0, 0.3, 0.0), 1.0);
        let oc = spec(Scenario::S1, Regime::OutOfControl);
        assert_eq!(oc.true_intensity(50.0 / 128.0, 0.3, 30.0), 0.0);
        assert_eq!(oc.true_intensity(61.0 / 128.0, 0.3, 30.0), 1.0);
        let s5 = spec(Scenario::S5, Regime::InControl);
        assert_eq!(s5.true_intensity(0.5, 0.5, 0.0), 0.0);
        assert_eq!(s5.true_intensity(115.0 / 128.0, 0.5, 0.0), 1.0);
    }

    #[test]
    fn edges_follow_displays() {
        // S2 at t = 12: half-width (12 + 20) / 512 = 1/16.
        let s2 = spec(Scenario::S2, Regime::InControl);
        assert_eq!(s2.true_intensity(0.5 + 8.0 / 128.0, 0.5, 12.0), 0.0);
        assert_eq!(s2.true_intensity(0.5 + 9.0 / 128.0, 0.5, 12.0), 1.0);
        // S3 at t = 64: centre x = 0.25, half-width 5/128.
        let s3 = spec(Scenario::S3, Regime::InControl);
        assert_eq!(s3.true_intensity(0.25 + 5.0 / 128.0, 0.5, 64.0), 0.0);
        assert_eq!(s3.true_intensity(0.25 + 6.0 / 128.0, 0.5, 64.0), 1.0);
        assert_eq!(s3.true_intensity(0.25, 0.5 + 6.0 / 128.0, 64.0), 1.0);
        // S4 square is closed.
        let s4 = spec(Scenario::S4, Regime::OutOfControl);
        assert_eq!(s4.true_intensity(0.25, 0.5, 5.0), 0.0);
        assert_eq!(s4.true_intensity(0.24, 0.5, 5.0), 1.0);
        assert_eq!(s4.true_intensity(0.24, 0.5, 21.0), 0.0);
        assert_eq!(s4.true_intensity(0.25 - 6.0 / 128.0, 0.5, 21.0), 1.0);
    }

    #[test]
    fn s5_levels() {
        let oc = spec(Scenario::S5, Regime::OutOfControl);
        assert!((oc.true_intensity(0.1, 0.1, 30.0) - 0.3).abs() < 1e-15);
        assert!((oc.true_intensity(0.99, 0.1, 30.0) - (0.3 + 1.0 - 0.15)).abs() < 1e-15);
    }

    #[test]
    fn regimes_agree_up_to_change() {
        for s in Scenario::ALL {
            let ic = ScenarioSpec {
                n: 32,
                horizon: 25,
                seed: 9,
                ..spec(s, Regime::InControl)
            };
            let oc = ic.with_regime(Regime::OutOfControl);
            for k in 1..=20 {
                assert_eq!(ic.frame(k).unwrap(), oc.frame(k).unwrap(), "{s} k={k}");
            }
            assert_ne!(ic.true_frame(25.0).unwrap(), oc.true_frame(25.0).unwrap(), "{s}");
        }
    }

    #[test]
    fn noiseless_frames_equal_truth() {
        let sp = ScenarioSpec {
            n: 16,
            sigma: 0.0,
            horizon: 3,
            ..spec(Scenario::S3, Regime::InControl)
        };
        let seq = generate_sequence(&sp).unwrap();
        assert_eq!(seq.len(), 3);
        for f in seq.frames() {
            assert_eq!(f, &sp.true_frame(f.time()).unwrap());
        }
    }

    #[test]
    fn noise_sd_at_full_scale() {
        let sp = ScenarioSpec {
            seed: 4,
            ..spec(Scenario::S1, Regime::InControl)
        };
        let w = sp.frame(7).unwrap();
        let f = sp.true_frame(7.0).unwrap();
        let resid: Vec<f64> = w.data().iter().zip(f.data()).map(|(a, b)| a - b).collect();
        let sd = crate::stats::sample_sd(&resid);
        assert!((0.148..=0.152).contains(&sd), "sd {sd}");
    }

    #[test]
    fn parse_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("s6".parse::<Scenario>().is_err());
        assert_eq!("OC".parse::<Regime>().unwrap(), Regime::OutOfControl);
    }

    #[test]
    fn invalid_sigma_is_rejected() {
        let sp = ScenarioSpec {
            sigma: -1.0,
            ..spec(Scenario::S1, Regime::InControl)
        };
        assert!(generate_sequence(&sp).is_err());
    }
}
