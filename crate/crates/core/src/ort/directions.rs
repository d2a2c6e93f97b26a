use crate::model::canonicalize;
use crate::rng::{derive_seed, standard_normal, substream};

/// The three coordinate axes followed by `n - 3` Fibonacci-lattice points
/// on the half-sphere, all in canonical sign.
pub fn candidate_directions(n: usize) -> Vec<[f64; 3]> {
    let mut dirs = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let m = n.saturating_sub(3);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for k in 0..m {
        // z in (0, 1): upper hemisphere; the lower one repeats it up to sign.
        let z = (k as f64 + 0.5) / m as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * k as f64;
        let (alpha, _) = canonicalize([r * phi.cos(), r * phi.sin(), z], 0.0);
        dirs.push(alpha);
    }
    dirs
}

/// `count` seeded uniform directions for the node identified by `key`.
pub(crate) fn random_directions(seed: u64, key: u64, count: usize) -> Vec<[f64; 3]> {
    let mut rng = substream(derive_seed(seed, key), 0x6469_7273);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = [
            standard_normal(&mut rng),
            standard_normal(&mut rng),
            standard_normal(&mut rng),
        ];
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            let (alpha, _) = canonicalize([v[0] / norm, v[1] / norm, v[2] / norm], 0.0);
            out.push(alpha);
        }
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Orthonormal basis of the plane orthogonal to the unit vector `d`.
pub(crate) fn tangent_basis(d: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let k = (0..3)
        .min_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
        .unwrap_or(0);
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let p = dot(&e, d);
    let u1 = normalized([e[0] - p * d[0], e[1] - p * d[1], e[2] - p * d[2]]);
    let u2 = [
        d[1] * u1[2] - d[2] * u1[1],
        d[2] * u1[0] - d[0] * u1[2],
        d[0] * u1[1] - d[1] * u1[0],
    ];
    (u1, u2)
}

/// `d` turned by `angle` towards the unit tangent `u`, in canonical sign.
pub(crate) fn rotate(d: &[f64; 3], u: &[f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let v = normalized([c * d[0] + s * u[0], c * d[1] + s * u[1], c * d[2] + s * u[2]]);
    canonicalize(v, 0.0).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_canonical;

    #[test]
    fn grid_starts_with_axes_and_is_canonical_unit() {
        let dirs = candidate_directions(64);
        assert_eq!(dirs.len(), 64);
        assert_eq!(&dirs[..3], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for d in &dirs {
            assert!((dot(d, d) - 1.0).abs() < 1e-12);
            assert!(is_canonical(d));
        }
        assert_eq!(candidate_directions(3).len(), 3);
    }

    #[test]
    fn grid_covers_the_sphere() {
        // Every direction should be within ~0.35 rad (up to sign) of a grid point.
        let dirs = candidate_directions(64);
        for probe in random_directions(1, 2, 500) {
            let best = dirs.iter().map(|d| dot(d, &probe).abs()).fold(0.0, f64::max);
            assert!(best.acos() < 0.35, "gap {}", best.acos());
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for d in candidate_directions(20) {
            let (u1, u2) = tangent_basis(&d);
            assert!(dot(&u1, &d).abs() < 1e-12);
            assert!(dot(&u2, &d).abs() < 1e-12);
            assert!(dot(&u1, &u2).abs() < 1e-12);
            assert!((dot(&u2, &u2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_directions_are_reproducible() {
        assert_eq!(random_directions(5, 9, 4), random_directions(5, 9, 4));
        assert_ne!(random_directions(5, 9, 4), random_directions(5, 10, 4));
    }
}
