//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that only needs field arithmetic and elementary functions is
//! written against [`Scalar`], so the same code runs on `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the library: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for `f32`/`f64` (they saturate to infinity).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated accumulator.
///
/// Inner products over thousands of mixed-sign terms otherwise lose the
/// resolution the first-order-condition residuals need.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.carry);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<CompensatedSum<T>>().value()
}

/// Compensated inner product of two equally long slices.
pub fn compensated_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

/// Sample mean and standard error of the mean, accumulated in `f64`
/// regardless of the storage type.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Running first and second moments with compensation; mergeable in a fixed
/// order so block-parallel reductions are partition independent.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    n: usize,
    s1: CompensatedSum<f64>,
    s2: CompensatedSum<f64>,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1.add(x);
        self.s2.add(x * x);
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.s1.merge(&other.s1);
        self.s2.merge(&other.s2);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn sum(&self) -> f64 {
        self.s1.value()
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.s1.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.s2.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean(),
            std_err: (self.variance() / self.n.max(1) as f64).sqrt(),
        }
    }
}

impl FromIterator<f64> for MomentAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut xs = vec![1.0e16_f64];
        xs.extend(std::iter::repeat_n(1.0, 1000));
        xs.push(-1.0e16);
        assert_eq!(compensated_sum(xs.iter().copied()), 1000.0);
    }

    #[test]
    fn moments_of_small_sample() {
        let acc: MomentAccumulator = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(acc.mean(), 2.5);
        assert!((acc.variance() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let whole: MomentAccumulator = xs.iter().copied().collect();
        let mut left: MomentAccumulator = xs[..400].iter().copied().collect();
        let right: MomentAccumulator = xs[400..].iter().copied().collect();
        left.merge(&right);
        assert!((whole.mean() - left.mean()).abs() < 1e-15);
        assert!((whole.variance() - left.variance()).abs() < 1e-14);
    }
}
