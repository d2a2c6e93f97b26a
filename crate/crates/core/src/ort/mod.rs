//! Oblique-axis regression tree over `(x, y, t)`.
//!
//! The tree is grown greedily: a node is split by the hyperplane that
//! maximizes the per-point reduction in squared error, and becomes a leaf
//! once that reduction falls to the gain cutoff (or a size/depth guard
//! triggers). Leaves store the mean of their training intensities.

mod directions;
mod search;

use rayon::join;

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence, LatticePoint, SplitRule};
use crate::stats;

pub use directions::candidate_directions;
pub use search::best_split;

/// How the split-acceptance threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainCutoff {
    /// Fixed per-point SSE reduction.
    Absolute(f64),
    /// Multiple of the window's noise variance, estimated robustly from
    /// horizontal pixel differences.
    NoiseFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub gain_cutoff: GainCutoff,
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Size of the deterministic direction grid, counting the three axes.
    pub n_grid_directions: usize,
    pub n_random_directions: usize,
    /// Length of the window in scaled time units.
    pub time_scale: f64,
    /// Local search around the best grid directions.
    pub refine: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gain_cutoff: GainCutoff::NoiseFraction(DEFAULT_NOISE_FRACTION),
            min_leaf: 8,
            max_depth: 30,
            n_grid_directions: 64,
            n_random_directions: 0,
            time_scale: 1.0,
            refine: true,
            seed: 0,
        }
    }
}

pub const DEFAULT_NOISE_FRACTION: f64 = 0.01;

/// Lower bound on any resolved cutoff so that rounding noise in pure nodes
/// never triggers a split.
const CUTOFF_FLOOR: f64 = 1e-12;

impl FitConfig {
    /// Axis-aligned search only (classic CART splits).
    pub fn axis_aligned() -> Self {
        Self {
            n_grid_directions: 3,
            refine: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 1 {
            return Err(Error::config("min_leaf must be at least 1"));
        }
        if self.max_depth < 1 {
            return Err(Error::config("max_depth must be at least 1"));
        }
        if self.n_grid_directions < 3 {
            return Err(Error::config("n_grid_directions must be at least 3"));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::config("time_scale must be positive"));
        }
        match self.gain_cutoff {
            GainCutoff::Absolute(c) | GainCutoff::NoiseFraction(c) if c.is_finite() && c >= 0.0 => Ok(()),
            other => Err(Error::config(format!("invalid gain cutoff {other:?}"))),
        }
    }

    /// The absolute cutoff to use for `window`.
    pub fn resolve_cutoff(&self, window: &ImageSequence) -> f64 {
        self.cutoff_for(window.frames())
    }

    fn cutoff_for(&self, frames: &[ImageFrame]) -> f64 {
        match self.gain_cutoff {
            GainCutoff::Absolute(c) => c.max(CUTOFF_FLOOR),
            GainCutoff::NoiseFraction(f) => (f * noise_variance(frames)).max(CUTOFF_FLOOR),
        }
    }
}

/// Robust noise variance from horizontal first differences:
/// `(1.4826 * median|d| / sqrt(2))^2`. Jumps only touch a small fraction of
/// the differences, so the median ignores them.
pub fn estimate_noise_variance(window: &ImageSequence) -> f64 {
    noise_variance(window.frames())
}

fn noise_variance(frames: &[ImageFrame]) -> f64 {
    let mut diffs = Vec::new();
    for f in frames {
        let (nx, ny) = f.dims();
        let d = f.data();
        for j in 0..ny {
            let row = &d[j * nx..(j + 1) * nx];
            diffs.extend(row.windows(2).map(|p| (p[1] - p[0]).abs()));
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    let mid = diffs.len() / 2;
    let (_, m, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    let sd = 1.4826 * *m / std::f64::consts::SQRT_2;
    sd * sd
}

/// Affine map from sequence time to the tree's scaled time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl TimeMap {
    /// Sends `first` to 0 and `last` to `time_scale`.
    pub fn for_window(first: f64, last: f64, time_scale: f64) -> Self {
        Self {
            offset: first,
            scale: time_scale / (last - first),
        }
    }

    #[inline]
    pub fn apply(&self, t: f64) -> f64 {
        (t - self.offset) * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafStats {
    pub leaf_id: usize,
    pub fitted_mean: f64,
    pub training_count: usize,
    /// Training SSE about `fitted_mean`.
    pub training_sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { rule: SplitRule, gain: f64, left: usize, right: usize },
    Leaf(LeafStats),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
    time_map: TimeMap,
    gain_cutoff: f64,
}

impl FittedTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, leaf_id: usize) -> &LeafStats {
        match &self.nodes[self.leaves[leaf_id]] {
            TreeNode::Leaf(stats) => stats,
            TreeNode::Split { .. } => unreachable!("leaf index points at a split"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LeafStats> {
        (0..self.n_leaves()).map(|id| self.leaf(id))
    }

    pub fn time_map(&self) -> TimeMap {
        self.time_map
    }

    /// Cutoff that was in force while growing.
    pub fn gain_cutoff(&self) -> f64 {
        self.gain_cutoff
    }

    /// Split rules in depth-first order.
    pub fn rules(&self) -> Vec<SplitRule> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { rule, .. } => Some(*rule),
                TreeNode::Leaf(_) => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf id reached by `(x, y, t_scaled)`.
    #[inline]
    pub fn route(&self, x: f64, y: f64, t_scaled: f64) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf(stats) => return stats.leaf_id,
                TreeNode::Split { rule, left, right, .. } => {
                    at = if rule.goes_left(x, y, t_scaled) { *left } else { *right };
                }
            }
        }
    }

    pub fn training_sse(&self) -> f64 {
        stats::sum(self.leaves().map(|l| l.training_sse))
    }
}

/// Per-point SSE reduction of splitting `points` with `rule`. Empty
/// children contribute nothing, so a one-sided rule has gain 0.
pub fn impurity_gain(points: &[LatticePoint], rule: &SplitRule) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: points.len(),
        });
    }
    fn sse<'a>(values: impl Iterator<Item = &'a LatticePoint> + Clone) -> f64 {
        let n = values.clone().count();
        if n == 0 {
            return 0.0;
        }
        let m = stats::sum(values.clone().map(|p| p.intensity)) / n as f64;
        stats::sum(values.map(|p| (p.intensity - m) * (p.intensity - m)))
    }
    let left = points.iter().filter(|p| rule.goes_left(p.x, p.y, p.t_scaled));
    let right = points.iter().filter(|p| !rule.goes_left(p.x, p.y, p.t_scaled));
    let gain = (sse(points.iter()) - sse(left) - sse(right)) / points.len() as f64;
    Ok(gain.max(0.0))
}

/// Column-major view of a node's training points.
#[derive(Debug, Clone, Default)]
pub(crate) struct NodeData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub mean: f64,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl NodeData {
    fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    #[inline]
    fn push(&mut self, x: f64, y: f64, t: f64, w: f64) {
        self.x.push(x);
        self.y.push(y);
        self.t.push(t);
        self.w.push(w);
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    /// Fills in the mean and bounding box.
    fn finish(mut self) -> Self {
        let n = self.len();
        self.mean = if n == 0 { 0.0 } else { stats::sum(self.w.iter().copied()) / n as f64 };
        let bounds = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        };
        for (k, col) in [&self.x, &self.y, &self.t].into_iter().enumerate() {
            let (lo, hi) = bounds(col);
            self.lo[k] = lo;
            self.hi[k] = hi;
        }
        self
    }

    pub(crate) fn from_points(points: &[LatticePoint]) -> Self {
        let mut node = Self::with_capacity(points.len());
        for p in points {
            node.push(p.x, p.y, p.t_scaled, p.intensity);
        }
        node.finish()
    }

    fn from_frames(frames: &[ImageFrame], time_map: &TimeMap) -> Self {
        let per = frames.first().map_or(0, |f| f.data().len());
        let mut node = Self::with_capacity(per * frames.len());
        for f in frames {
            let lat = f.lattice();
            let ts = time_map.apply(f.time());
            for j in 0..lat.ny {
                let y = lat.y(j);
                for i in 0..lat.nx {
                    node.push(lat.x(i), y, ts, f.get(i, j));
                }
            }
        }
        node.finish()
    }

    fn partition(&self, rule: &SplitRule) -> (Self, Self) {
        let n = self.len();
        let mut left = Self::with_capacity(n / 2);
        let mut right = Self::with_capacity(n / 2);
        for k in 0..n {
            let (x, y, t, w) = (self.x[k], self.y[k], self.t[k], self.w[k]);
            if rule.goes_left(x, y, t) {
                left.push(x, y, t, w);
            } else {
                right.push(x, y, t, w);
            }
        }
        (left.finish(), right.finish())
    }

    fn sse(&self) -> f64 {
        stats::sum(self.w.iter().map(|w| (w - self.mean) * (w - self.mean)))
    }
}

enum Grown {
    Leaf { mean: f64, count: usize, sse: f64 },
    Split { rule: SplitRule, gain: f64, left: Box<Grown>, right: Box<Grown> },
}

struct GrowCtx<'a> {
    cfg: &'a FitConfig,
    cutoff: f64,
    directions: &'a [[f64; 3]],
}

/// Nodes at least this large grow their two children in parallel.
const PARALLEL_GROW_MIN: usize = 16_384;

fn grow(node: NodeData, depth: usize, key: u64, ctx: &GrowCtx<'_>) -> Grown {
    let leaf = |node: &NodeData| Grown::Leaf {
        mean: node.mean,
        count: node.len(),
        sse: node.sse(),
    };
    if depth >= ctx.cfg.max_depth || node.len() < 2 * ctx.cfg.min_leaf {
        return leaf(&node);
    }
    let Some(found) = search::search(&node, ctx.cfg, ctx.directions, key, ctx.cutoff) else {
        return leaf(&node);
    };
    if found.gain <= ctx.cutoff {
        return leaf(&node);
    }
    let (l, r) = node.partition(&found.rule);
    if l.len() < ctx.cfg.min_leaf || r.len() < ctx.cfg.min_leaf {
        return leaf(&node);
    }
    drop(node);
    let (kl, kr) = (
        crate::rng::derive_seed(key, 2 * depth as u64),
        crate::rng::derive_seed(key, 2 * depth as u64 + 1),
    );
    let (left, right) = if l.len() + r.len() >= PARALLEL_GROW_MIN {
        join(|| grow(l, depth + 1, kl, ctx), || grow(r, depth + 1, kr, ctx))
    } else {
        (grow(l, depth + 1, kl, ctx), grow(r, depth + 1, kr, ctx))
    };
    Grown::Split {
        rule: found.rule,
        gain: found.gain,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn flatten(grown: Grown, nodes: &mut Vec<TreeNode>, leaves: &mut Vec<usize>) -> usize {
    let at = nodes.len();
    match grown {
        Grown::Leaf { mean, count, sse } => {
            nodes.push(TreeNode::Leaf(LeafStats {
                leaf_id: leaves.len(),
                fitted_mean: mean,
                training_count: count,
                training_sse: sse,
            }));
            leaves.push(at);
        }
        Grown::Split { rule, gain, left, right } => {
            nodes.push(TreeNode::Leaf(LeafStats {
                leaf_id: usize::MAX,
                fitted_mean: 0.0,
                training_count: 0,
                training_sse: 0.0,
            }));
            let l = flatten(*left, nodes, leaves);
            let r = flatten(*right, nodes, leaves);
            nodes[at] = TreeNode::Split { rule, gain, left: l, right: r };
        }
    }
    at
}

/// Grows the tree on every pixel of every frame in `window`.
pub fn fit_tree(window: &ImageSequence, cfg: &FitConfig) -> Result<FittedTree> {
    fit_frames(window.frames(), cfg)
}

/// As [`fit_tree`] on a slice of frames with equal dimensions and
/// increasing times.
pub fn fit_frames(frames: &[ImageFrame], cfg: &FitConfig) -> Result<FittedTree> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::SequenceTooShort {
            needed: 2,
            found: frames.len(),
        });
    }
    for pair in frames.windows(2) {
        pair[1].check_dims(pair[0].dims())?;
        if !(pair[1].time() > pair[0].time()) {
            return Err(Error::NonIncreasingTimes {
                prev: pair[0].time(),
                next: pair[1].time(),
            });
        }
    }
    let time_map = TimeMap::for_window(frames[0].time(), frames[frames.len() - 1].time(), cfg.time_scale);
    let root = NodeData::from_frames(frames, &time_map);
    let cutoff = cfg.cutoff_for(frames);
    let directions = candidate_directions(cfg.n_grid_directions);
    let ctx = GrowCtx {
        cfg,
        cutoff,
        directions: &directions,
    };
    let grown = grow(root, 0, cfg.seed, &ctx);
    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    flatten(grown, &mut nodes, &mut leaves);
    Ok(FittedTree {
        nodes,
        leaves,
        time_map,
        gain_cutoff: cutoff,
    })
}
