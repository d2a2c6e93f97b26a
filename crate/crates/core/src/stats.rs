//! Small numeric helpers shared by the monitor, calibration and reports.

/// Upper 95% point of the standard normal distribution.
pub const Z_95: f64 = 1.644_853_626_951_472_2;

/// Neumaier-compensated sum; order-robust enough that replicate aggregates
/// do not drift with the order results arrive in.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            comp += (s - t) + v;
        } else {
            comp += (v - t) + s;
        }
        s = t;
    }
    s + comp
}

/// Mean taken about the minimum, so equal inputs return themselves exactly.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let base = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !base.is_finite() {
        return sum(values.iter().copied()) / values.len() as f64;
    }
    base + sum(values.iter().map(|v| v - base)) / values.len() as f64
}

/// Sample variance with denominator `n - 1`; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and
/// the standard normal CDF.
pub fn ks_distance_normal(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let cdf = normal_cdf(v);
        d = d.max((cdf - i as f64 / n).abs()).max((j as f64 / n - cdf).abs());
        i = j;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(v), 2.0);
    }

    #[test]
    fn mean_and_sd() {
        let v = [0.0, 2.0];
        assert_eq!(mean(&v), 1.0);
        assert!((sample_sd(&v) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(variance(&[3.0]), 0.0);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(Z_95) - 0.95).abs() < 1e-12);
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-12);
    }

    #[test]
    fn ks_of_point_mass_at_zero_is_half() {
        assert!((ks_distance_normal(&[0.0; 50]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
