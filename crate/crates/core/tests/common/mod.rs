#![allow(dead_code)]

use ortdrift::model::{ImageFrame, ImageSequence, LatticePoint};
use ortdrift::ort::{fit_tree, FitConfig};
use ortdrift::predict::partition_at;
use ortdrift::preprocess::impute_missing;
use ortdrift::rng::{seed_rng, standard_normal};
use ortdrift::simgen::{Regime, Scenario, ScenarioSpec};
use rand::Rng;

pub fn axes() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn coord(p: &LatticePoint, axis: usize) -> f64 {
    [p.x, p.y, p.t_scaled][axis]
}

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Exhaustive axis/threshold search with child sizes of at least
/// `min_leaf`. Thresholds are midpoints of consecutive distinct coordinate
/// values; the first candidate (axis x, y, t, then increasing threshold)
/// wins unless beaten beyond a relative 1e-12.
pub fn brute_force_split(points: &[LatticePoint], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let n = points.len();
    let all: Vec<f64> = points.iter().map(|p| p.intensity).collect();
    let parent = sse(&all);
    let mut best: Option<(usize, f64, f64)> = None;
    for axis in 0..3 {
        let mut values: Vec<f64> = points.iter().map(|p| coord(p, axis)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let c = 0.5 * (w[0] + w[1]);
            let (left, right): (Vec<&LatticePoint>, Vec<&LatticePoint>) =
                points.iter().partition(|p| coord(p, axis) <= c);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let l: Vec<f64> = left.iter().map(|p| p.intensity).collect();
            let r: Vec<f64> = right.iter().map(|p| p.intensity).collect();
            let gain = ((parent - sse(&l) - sse(&r)) / n as f64).max(0.0);
            match best {
                Some((_, _, g)) if gain <= g + 1e-12 * g.abs() => {}
                _ => best = Some((axis, c, gain)),
            }
        }
    }
    best
}

/// A node of `size` points drawn without replacement from a small window
/// lattice, so coordinates repeat; intensities are noisy steps or binary.
pub fn random_node(seed: u64, size: usize) -> Vec<LatticePoint> {
    let mut rng = seed_rng(seed);
    let n = rng.random_range(3..=8);
    let frames = rng.random_range(2..=4);
    let binary = rng.random_bool(0.3);
    let axis = rng.random_range(0..3);
    let cut = rng.random::<f64>();
    let mut lattice = Vec::new();
    for k in 0..frames {
        for j in 0..n {
            for i in 0..n {
                lattice.push(((i + 1) as f64 / n as f64, (j + 1) as f64 / n as f64, k as f64 / (frames - 1) as f64));
            }
        }
    }
    let picks = rand::seq::index::sample(&mut rng, lattice.len(), size.min(lattice.len()));
    picks
        .iter()
        .map(|idx| {
            let (x, y, t) = lattice[idx];
            let z = [x, y, t][axis];
            let intensity = if binary {
                f64::from(u8::from(rng.random_bool(0.5)))
            } else {
                f64::from(u8::from(z > cut)) + 0.3 * standard_normal(&mut rng)
            };
            LatticePoint { x, y, t_scaled: t, intensity }
        })
        .collect()
}

/// Noiseless S1 frames `first..first + m0` on an `n`-lattice.
pub fn noiseless_s1_window(n: usize, first: usize, m0: usize) -> ImageSequence {
    let spec = ScenarioSpec {
        n,
        sigma: 0.0,
        ..ScenarioSpec::new(Scenario::S1, Regime::InControl)
    };
    let frames = (first..first + m0).map(|k| spec.frame(k).unwrap()).collect();
    ImageSequence::new(frames).unwrap()
}

pub struct JumpCheck {
    pub sse: f64,
    pub leaves: usize,
    /// Largest gap in columns between the predicted and true edge over all
    /// rows of the next frame.
    pub edge_error: usize,
}

pub fn jump_check(n: usize, first: usize, m0: usize) -> JumpCheck {
    let window = noiseless_s1_window(n, first, m0);
    let tree = fit_tree(&window, &FitConfig::default()).unwrap();
    let t_next = (first + m0) as f64;
    let part = partition_at(&tree, (n, n), t_next).unwrap();
    // Pixel i is 1 when (i + 1) / n > t / n.
    let true_edge = (t_next as usize).min(n);
    let mut edge_error = 0;
    for j in 0..n {
        let left = part.leaf_at(0, j);
        let edge = (0..n).find(|&i| part.leaf_at(i, j) != left).unwrap_or(n);
        edge_error = edge_error.max(edge.abs_diff(true_edge));
    }
    JumpCheck {
        sse: tree.training_sse(),
        leaves: tree.n_leaves(),
        edge_error,
    }
}

/// Frames `a + b t` at `times` with per-pixel random `a`, `b`.
pub fn affine_sequence(seed: u64, n: usize, times: &[f64]) -> (Vec<f64>, Vec<f64>, ImageSequence) {
    let mut rng = seed_rng(seed);
    let a: Vec<f64> = (0..n * n).map(|_| standard_normal(&mut rng)).collect();
    let b: Vec<f64> = (0..n * n).map(|_| standard_normal(&mut rng)).collect();
    let frames = times
        .iter()
        .map(|&t| ImageFrame::new(n, n, a.iter().zip(&b).map(|(a, b)| a + b * t).collect(), t).unwrap())
        .collect();
    (a, b, ImageSequence::new(frames).unwrap())
}

/// Largest error of imputing held-out frames of an affine sequence.
pub fn imputation_error(seed: u64) -> f64 {
    let mut rng = seed_rng(seed ^ 0x5eed);
    let mut t = 0.0;
    let times: Vec<f64> = (0..12)
        .map(|_| {
            t += rng.random_range(0.25..3.0);
            t
        })
        .collect();
    let (a, b, full) = affine_sequence(seed, 9, &times);
    let kept: Vec<ImageFrame> = full
        .frames()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k == 0 || *k == times.len() - 1 || k % 3 != 1)
        .map(|(_, f)| f.clone())
        .collect();
    let observed = ImageSequence::new(kept).unwrap();
    let mut targets = times.clone();
    targets.push(0.5 * (times[3] + times[4]));
    targets.sort_by(f64::total_cmp);
    let out = impute_missing(&observed, &targets).unwrap();
    let mut worst: f64 = 0.0;
    for f in out.frames() {
        for (p, v) in f.data().iter().enumerate() {
            worst = worst.max((v - (a[p] + b[p] * f.time())).abs());
        }
    }
    worst
}
