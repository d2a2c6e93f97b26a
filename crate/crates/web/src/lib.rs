//! WebAssembly bindings for the browser demo in `www/`.

use ortdrift::model::ImageSequence;
use ortdrift::monitor::{estimate_theta_sq, prediction_residual, run_monitor, MonitorState};
use ortdrift::ort::{fit_frames, FitConfig};
use ortdrift::predict::{denoise_frame, partition_at};
use ortdrift::rng::derive_seed;
use ortdrift::simgen::{Regime, Scenario, ScenarioSpec};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A simulated stream held in memory.
#[wasm_bindgen]
pub struct Demo {
    spec: ScenarioSpec,
    seq: ImageSequence,
    fit: FitConfig,
}

/// Denoised frame, leaf labels and lack of fit for one predicted frame.
#[wasm_bindgen(getter_with_clone)]
pub struct Prediction {
    pub denoised: Vec<f64>,
    pub labels: Vec<u32>,
    pub leaves: usize,
    pub mse: f64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, regime: &str, n: usize, sigma: f64, horizon: usize, seed: u32) -> Result<Demo, JsError> {
        let scenario: Scenario = scenario.parse().map_err(js)?;
        let regime: Regime = regime.parse().map_err(js)?;
        let spec = ScenarioSpec {
            n,
            sigma,
            horizon,
            seed: u64::from(seed),
            ..ScenarioSpec::new(scenario, regime)
        };
        let seq = spec.generate().map_err(js)?;
        Ok(Demo {
            spec,
            seq,
            fit: FitConfig::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    #[wasm_bindgen(js_name = defaultKappa)]
    pub fn default_kappa(&self) -> f64 {
        self.spec.scenario.default_kappa()
    }

    /// Observed intensities of frame `k` (0-based), row-major.
    pub fn frame(&self, k: usize) -> Result<Vec<f64>, JsError> {
        Ok(self.seq.get(k).map_err(js)?.data().to_vec())
    }

    /// Fits on the `m0` frames before `k` and leaf-averages frame `k`.
    pub fn predict(&self, k: usize, m0: usize) -> Result<Prediction, JsError> {
        if k < m0 {
            return Err(JsError::new("the frame needs m0 earlier frames"));
        }
        let frames = &self.seq.frames()[k - m0..k];
        let target = self.seq.get(k).map_err(js)?;
        let tree = fit_frames(frames, &self.fit).map_err(js)?;
        let part = partition_at(&tree, target.dims(), target.time()).map_err(js)?;
        let denoised = denoise_frame(target, &part).map_err(js)?;
        let r = prediction_residual(frames, target, &self.fit).map_err(js)?;
        Ok(Prediction {
            denoised: denoised.into_data(),
            labels: part.leaf_of_pixel().iter().map(|&l| l as u32).collect(),
            leaves: part.nonempty_leaf_count(),
            mse: r.mse(),
        })
    }

    /// CUSUM values for every monitored frame, charting past any signal.
    /// `theta_sq` is estimated from an independent in-control stream.
    pub fn chart(&self, m0: usize, kappa: f64, q0: f64) -> Result<Vec<f64>, JsError> {
        let phase_one = ScenarioSpec {
            regime: Regime::InControl,
            horizon: m0 + 10,
            seed: derive_seed(self.spec.seed, 1),
            ..self.spec.clone()
        };
        let theta_sq = estimate_theta_sq(&phase_one.generate().map_err(js)?, m0, &self.fit).map_err(js)?;
        let mut state = MonitorState::new(theta_sq, kappa, q0, m0).map_err(js)?;
        let run = run_monitor(&self.seq, &mut state, &self.fit, true).map_err(js)?;
        Ok(run.history.iter().map(|r| r.q).collect())
    }
}
