//! Predicted partitions and leaf-only averaging.

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence, Lattice};
use crate::ort::{fit_tree, FitConfig, FittedTree};

/// Leaf assignment of every pixel of an `nx x ny` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedPartition {
    nx: usize,
    ny: usize,
    leaf_of_pixel: Vec<usize>,
    k: usize,
}

impl PredictedPartition {
    /// Builds a partition from raw labels (row-major). Labels need not be
    /// contiguous; `k` counts the distinct ones.
    pub fn from_labels(nx: usize, ny: usize, leaf_of_pixel: Vec<usize>) -> Result<Self> {
        let lattice = Lattice::new(nx, ny)?;
        if leaf_of_pixel.len() != lattice.len() {
            return Err(Error::BufferLength {
                expected: lattice.len(),
                found: leaf_of_pixel.len(),
            });
        }
        let mut seen: Vec<usize> = leaf_of_pixel.clone();
        seen.sort_unstable();
        seen.dedup();
        Ok(Self {
            nx,
            ny,
            k: seen.len(),
            leaf_of_pixel,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn leaf_of_pixel(&self) -> &[usize] {
        &self.leaf_of_pixel
    }

    pub fn leaf_at(&self, i: usize, j: usize) -> usize {
        self.leaf_of_pixel[j * self.nx + i]
    }

    /// Number of leaves that receive at least one pixel.
    pub fn nonempty_leaf_count(&self) -> usize {
        self.k
    }
}

/// Routes every pixel of the lattice at `t_query` through the tree.
pub fn partition_at(tree: &FittedTree, dims: (usize, usize), t_query: f64) -> Result<PredictedPartition> {
    let lattice = Lattice::new(dims.0, dims.1)?;
    let ts = tree.time_map().apply(t_query);
    if !ts.is_finite() {
        return Err(Error::NonFinite(0));
    }
    let mut labels = Vec::with_capacity(lattice.len());
    for j in 0..lattice.ny {
        let y = lattice.y(j);
        for i in 0..lattice.nx {
            labels.push(tree.route(lattice.x(i), y, ts));
        }
    }
    let mut used = vec![false; tree.n_leaves()];
    for &l in &labels {
        used[l] = true;
    }
    Ok(PredictedPartition {
        nx: dims.0,
        ny: dims.1,
        k: used.iter().filter(|u| **u).count(),
        leaf_of_pixel: labels,
    })
}

/// Replaces each pixel by the mean of the frame's pixels in its leaf.
pub fn denoise_frame(frame: &ImageFrame, partition: &PredictedPartition) -> Result<ImageFrame> {
    frame.check_dims(partition.dims())?;
    let labels = &partition.leaf_of_pixel;
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    // Sums are taken about the first pixel of each leaf, so constant leaves
    // reproduce their value exactly.
    let mut refs = vec![f64::NAN; n_labels];
    let mut sums = vec![0.0f64; n_labels];
    let mut counts = vec![0usize; n_labels];
    for (&l, &w) in labels.iter().zip(frame.data()) {
        if counts[l] == 0 {
            refs[l] = w;
        }
        sums[l] += w - refs[l];
        counts[l] += 1;
    }
    let means: Vec<f64> = (0..n_labels)
        .map(|l| if counts[l] == 0 { 0.0 } else { refs[l] + sums[l] / counts[l] as f64 })
        .collect();
    frame.with_data(labels.iter().map(|&l| means[l]).collect())
}

/// Fits on the whole window and leaf-averages frame `k` at its own time.
pub fn denoise_in_window(window: &ImageSequence, cfg: &FitConfig, k: usize) -> Result<ImageFrame> {
    let frame = window.get(k)?;
    let tree = fit_tree(window, cfg)?;
    let part = partition_at(&tree, frame.dims(), frame.time())?;
    denoise_frame(frame, &part)
}
