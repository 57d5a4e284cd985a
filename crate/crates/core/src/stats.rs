//! Small estimators shared by the verification harness.

use serde::Serialize;

use crate::scalar::Real;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<F> {
    pub low: F,
    pub high: F,
}

impl<F: Real> Interval<F> {
    pub fn contains(&self, x: F) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn half_width(&self) -> F {
        (self.high - self.low) / F::lit(2.0)
    }
}

/// Wilson score interval for a proportion `p_hat` observed on `n` effective trials.
pub fn wilson<F: Real>(p_hat: F, n: F, z: F) -> Interval<F> {
    if !(n > F::zero()) {
        return Interval { low: F::zero(), high: F::one() };
    }
    let z2 = z * z;
    let two = F::lit(2.0);
    let denom = F::one() + z2 / n;
    let centre = (p_hat + z2 / (two * n)) / denom;
    let spread = z * (p_hat * (F::one() - p_hat) / n + z2 / (F::lit(4.0) * n * n)).sqrt() / denom;
    Interval {
        low: (centre - spread).max(F::zero()),
        high: (centre + spread).min(F::one()),
    }
}

pub fn mean<F: Real>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |a, &x| a + x) / F::from_count(xs.len() as u64)
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance<F: Real>(xs: &[F]) -> F {
    if xs.len() < 2 {
        return F::zero();
    }
    let m = mean(xs);
    xs.iter().fold(F::zero(), |a, &x| a + (x - m) * (x - m)) / F::from_count(xs.len() as u64 - 1)
}

/// Ratio-of-sums estimate `sum(num) / sum(den)` with a delta-method standard
/// error computed from independent batches `(num_i, den_i)`.
pub fn ratio_of_sums<F: Real>(batches: &[(F, F)]) -> Option<(F, F)> {
    let num = batches.iter().fold(F::zero(), |a, b| a + b.0);
    let den = batches.iter().fold(F::zero(), |a, b| a + b.1);
    if !(den > F::zero()) {
        return None;
    }
    let ratio = num / den;
    let k = batches.len() as u64;
    if k < 2 {
        return Some((ratio, F::infinity()));
    }
    let kf = F::from_count(k);
    let mean_den = den / kf;
    let ss = batches.iter().fold(F::zero(), |a, &(n, d)| {
        let r = n - ratio * d;
        a + r * r
    });
    let se = (ss / (kf * (kf - F::one()))).sqrt() / mean_den;
    Some((ratio, se))
}

/// Least-squares slope of `y` against `x`.
pub fn slope<F: Real>(points: &[(F, F)]) -> Option<F> {
    if points.len() < 2 {
        return None;
    }
    let n = F::from_count(points.len() as u64);
    let mx = points.iter().fold(F::zero(), |a, p| a + p.0) / n;
    let my = points.iter().fold(F::zero(), |a, p| a + p.1) / n;
    let sxx = points.iter().fold(F::zero(), |a, p| a + (p.0 - mx) * (p.0 - mx));
    let sxy = points.iter().fold(F::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    (sxx > F::zero()).then(|| sxy / sxx)
}

/// Lag-`lag` sample autocorrelation of a series.
pub fn autocorrelation<F: Real>(xs: &[F], lag: usize) -> Option<F> {
    if xs.len() <= lag + 1 {
        return None;
    }
    let m = mean(xs);
    let var = xs.iter().fold(F::zero(), |a, &x| a + (x - m) * (x - m));
    if !(var > F::zero()) {
        return None;
    }
    let cov = xs.windows(lag + 1).fold(F::zero(), |a, w| a + (w[0] - m) * (w[lag] - m));
    Some(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_reference() {
        // 8 of 10: (0.4902, 0.9433), the textbook Wilson interval.
        let ci = wilson(0.8f64, 10.0, Z95);
        assert_relative_eq!(ci.low, 0.4902, epsilon = 1e-4);
        assert_relative_eq!(ci.high, 0.9433, epsilon = 1e-4);
        let zero = wilson(0.0f64, 50.0, Z95);
        assert!(zero.low.abs() < 1e-15);
        assert!(zero.high > 0.0);
    }

    #[test]
    fn ratio_and_slope() {
        let (r, se) = ratio_of_sums(&[(2.0f64, 1.0), (4.0, 2.0), (6.0, 3.0)]).unwrap();
        assert_relative_eq!(r, 2.0);
        assert_relative_eq!(se, 0.0);
        assert!(ratio_of_sums::<f64>(&[(1.0, 0.0)]).is_none());
        let s = slope(&[(0.0f64, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert_relative_eq!(s, 2.0);
        assert_relative_eq!(variance(&[1.0f64, 2.0, 3.0]), 1.0);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(autocorrelation(&alt, 1).unwrap() < -0.95);
    }
}
