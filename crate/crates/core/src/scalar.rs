//! Floating-point abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the kernels, the estimators and the moment formulas.
///
/// Implemented for `f32` and `f64`. Genotype summary statistics are always held in
/// `f64` and converted once per column.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + LowerExp + 'static
{
    /// Converts an `f64`, panicking only if the target type cannot represent finite input.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Converts a count.
    fn of_usize(x: usize) -> Self {
        Self::of(x as f64)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + LowerExp + 'static
{
}

/// Sum by recursive halving. The grouping depends only on the slice length, so the
/// result is reproducible regardless of how the values were produced.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = T::zero();
        for &x in xs {
            acc = acc + x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Inner product with a fixed left-to-right summation order over four lanes.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot product of unequal lengths");
    let mut lanes = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        lanes[0] = lanes[0] + a[i] * b[i];
        lanes[1] = lanes[1] + a[i + 1] * b[i + 1];
        lanes[2] = lanes[2] + a[i + 2] * b[i + 2];
        lanes[3] = lanes[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail = tail + a[i] * b[i];
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Mean and population-style standard deviation (divisor `n`).
pub fn mean_sd<T: Scalar>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::of_usize(xs.len());
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / n).sqrt())
}

/// Sample mean and unbiased standard deviation (divisor `n - 1`).
pub fn mean_sample_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1) as f64).sqrt())
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 5050.0);
    }

    #[test]
    fn dot_handles_tail() {
        let a = [1.0f32, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(dot(&a, &a), 55.0);
    }

    #[test]
    fn population_sd_uses_n_divisor() {
        let (m, s) = mean_sd(&[0.0f64, 2.0]);
        assert_eq!((m, s), (1.0, 1.0));
        let (_, s) = mean_sample_sd(&[0.0, 2.0]);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
    }
}
