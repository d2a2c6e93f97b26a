//! Frames, sequences and the coordinate conventions shared by every module.
//!
//! Pixel `(i, j)` with zero-based column `i` and row `j` sits at the design
//! point `x = (i + 1) / n_x`, `y = (j + 1) / n_y`, i.e. the equally spaced
//! lattice `{1/n, 2/n, ..., 1}` on each axis. Intensities are stored
//! row-major: `data[j * n_x + i]`.

use crate::error::{Error, Result};

/// The `n_x` by `n_y` design lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
}

impl Lattice {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::FrameTooSmall(nx, ny));
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.nx as f64
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j + 1) as f64 / self.ny as f64
    }

    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x(i), self.y(j))
    }

    /// Inverse of [`Lattice::coord`]. Returns `None` for points off the lattice.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let snap = |v: f64, n: usize| {
            let k = (v * n as f64).round();
            if k < 1.0 || k > n as f64 {
                return None;
            }
            let k = k as usize;
            ((k as f64 / n as f64 - v).abs() <= 1e-12).then_some(k - 1)
        };
        Some((snap(x, self.nx)?, snap(y, self.ny)?))
    }

    /// Effective linear resolution `sqrt(n_x * n_y)`; equals `n` for square frames.
    pub fn n_eff(&self) -> f64 {
        (self.len() as f64).sqrt()
    }
}

/// One grayscale image observed at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    lattice: Lattice,
    data: Vec<f64>,
    time: f64,
}

impl ImageFrame {
    pub fn new(nx: usize, ny: usize, data: Vec<f64>, time: f64) -> Result<Self> {
        let lattice = Lattice::new(nx, ny)?;
        if data.len() != lattice.len() {
            return Err(Error::BufferLength {
                expected: lattice.len(),
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        if !time.is_finite() {
            return Err(Error::config(format!("frame time {time} is not finite")));
        }
        Ok(Self { lattice, data, time })
    }

    /// Builds a frame by evaluating `f(x, y)` at every design point.
    pub fn from_fn(nx: usize, ny: usize, time: f64, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let lattice = Lattice::new(nx, ny)?;
        let mut data = Vec::with_capacity(lattice.len());
        for j in 0..ny {
            let y = lattice.y(j);
            for i in 0..nx {
                data.push(f(lattice.x(i), y));
            }
        }
        Self::new(nx, ny, data, time)
    }

    pub fn constant(nx: usize, ny: usize, value: f64, time: f64) -> Result<Self> {
        Self::new(nx, ny, vec![value; nx * ny], time)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.lattice.nx, self.lattice.ny)
    }

    pub fn nx(&self) -> usize {
        self.lattice.nx
    }

    pub fn ny(&self) -> usize {
        self.lattice.ny
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.lattice.nx + i]
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Same lattice and time, new intensities.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.lattice.nx, self.lattice.ny, data, self.time)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn check_dims(&self, expected: (usize, usize)) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Frames with a common lattice and strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    frames: Vec<ImageFrame>,
}

impl ImageSequence {
    pub fn new(frames: Vec<ImageFrame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            let dims = first.dims();
            for f in &frames[1..] {
                f.check_dims(dims)?;
            }
        }
        for pair in frames.windows(2) {
            let (prev, next) = (pair[0].time, pair[1].time);
            if next == prev {
                return Err(Error::DuplicateTime(next));
            }
            if next < prev {
                return Err(Error::NonIncreasingTimes { prev, next });
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[ImageFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<ImageFrame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(ImageFrame::dims)
    }

    pub fn get(&self, k: usize) -> Result<&ImageFrame> {
        self.frames.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.frames.len(),
        })
    }

    /// Frames `range` as a new sequence.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::IndexOutOfRange {
                index: range.end,
                len: self.len(),
            });
        }
        Ok(Self {
            frames: self.frames[range].to_vec(),
        })
    }
}

/// A labelled observation `(x, y, t_scaled) -> intensity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub x: f64,
    pub y: f64,
    pub t_scaled: f64,
    pub intensity: f64,
}

/// Oblique split `alpha . z <= c` (left) versus `> c` (right), with
/// `z = (x, y, t_scaled)`.
///
/// `alpha` has unit norm and canonical sign: its first nonzero component is
/// positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRule {
    alpha: [f64; 3],
    c: f64,
}

impl SplitRule {
    /// Normalizes and canonicalizes `(alpha, c)`. Flipping the sign swaps the
    /// sides, so only the hyperplane is preserved, not the left/right labels.
    pub fn new(alpha: [f64; 3], c: f64) -> Result<Self> {
        let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) || !c.is_finite() {
            return Err(Error::config(format!("degenerate split direction {alpha:?}")));
        }
        let (alpha, c) = canonicalize([alpha[0] / norm, alpha[1] / norm, alpha[2] / norm], c / norm);
        Ok(Self { alpha, c })
    }

    /// Builds a rule from a direction that is already unit and canonical.
    pub(crate) fn from_canonical(alpha: [f64; 3], c: f64) -> Self {
        debug_assert!(is_canonical(&alpha));
        Self { alpha, c }
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn project(&self, x: f64, y: f64, t: f64) -> f64 {
        project(&self.alpha, x, y, t)
    }

    #[inline]
    pub fn goes_left(&self, x: f64, y: f64, t: f64) -> bool {
        self.project(x, y, t) <= self.c
    }
}

/// `alpha . (x, y, t)` with a fixed evaluation order so that the split
/// search and later routing agree bit for bit.
#[inline]
pub(crate) fn project(alpha: &[f64; 3], x: f64, y: f64, t: f64) -> f64 {
    alpha[0] * x + alpha[1] * y + alpha[2] * t
}

pub(crate) fn is_canonical(alpha: &[f64; 3]) -> bool {
    alpha.iter().find(|a| **a != 0.0).is_some_and(|a| *a > 0.0)
}

/// Flips `(alpha, c)` so the first nonzero component of `alpha` is positive.
pub fn canonicalize(alpha: [f64; 3], c: f64) -> ([f64; 3], f64) {
    if is_canonical(&alpha) {
        (alpha, c)
    } else {
        ([-alpha[0], -alpha[1], -alpha[2]], -c)
    }
}
