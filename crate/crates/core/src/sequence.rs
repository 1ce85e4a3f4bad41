//! Infinite coefficient sequences: a dense finite prefix plus an optional
//! closed-form tail rule.
//!
//! Every rule has the shape `i ↦ scale · ratioⁱ · i^(−exponent)` (indices
//! start at 1). The family contains the zero, constant, geometric and power
//! sequences and is closed under pointwise products, so squared norms and
//! inner products of two ruled sequences stay in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{ApmError, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Closed-form index function `scale · ratioⁱ · i^(−exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRule<T> {
    pub scale: T,
    pub ratio: T,
    pub exponent: T,
}

/// Outcome of an infinite (tail) sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summability<T> {
    Summable(T),
    Divergent,
}

impl<T: Scalar> Summability<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Summability::Summable(v) => Some(v),
            Summability::Divergent => None,
        }
    }

    pub fn is_summable(self) -> bool {
        matches!(self, Summability::Summable(_))
    }

    fn map(self, f: impl FnOnce(T) -> T) -> Self {
        match self {
            Summability::Summable(v) => Summability::Summable(f(v)),
            Summability::Divergent => Summability::Divergent,
        }
    }

    fn plus(self, other: Self) -> Self {
        match (self, other) {
            (Summability::Summable(a), Summability::Summable(b)) => Summability::Summable(a + b),
            _ => Summability::Divergent,
        }
    }
}

impl<T: Scalar> TailRule<T> {
    pub fn zero() -> Self {
        Self {
            scale: T::zero(),
            ratio: T::one(),
            exponent: T::zero(),
        }
    }

    pub fn constant(value: T) -> Self {
        Self {
            scale: value,
            ratio: T::one(),
            exponent: T::zero(),
        }
    }

    /// `scale · ratioⁱ`, e.g. `geometric(1, 0.5)` is `2^(−i)`.
    pub fn geometric(scale: T, ratio: T) -> Self {
        Self {
            scale,
            ratio,
            exponent: T::zero(),
        }
    }

    /// `scale · i^(−exponent)`.
    pub fn power(scale: T, exponent: T) -> Self {
        Self {
            scale,
            ratio: T::one(),
            exponent,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.scale == T::zero()
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.ratio.is_finite() && self.exponent.is_finite()
    }

    #[inline]
    pub fn value(&self, i: usize) -> T {
        if self.is_zero() {
            return T::zero();
        }
        let idx = T::from_usize_lossy(i);
        let mut v = self.scale;
        if self.ratio != T::one() {
            v = v * self.ratio.powi(i as i32);
        }
        if self.exponent != T::zero() {
            v = v * idx.powf(-self.exponent);
        }
        v
    }

    /// Pointwise product of two rules.
    pub fn product(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            ratio: self.ratio * other.ratio,
            exponent: self.exponent + other.exponent,
        }
    }

    pub fn squared(&self) -> Self {
        self.product(self)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            scale: self.scale * factor,
            ..*self
        }
    }

    /// `Σ_{i>n} value(i)`, requiring absolute summability.
    pub fn sum_from(&self, n: usize) -> Summability<T> {
        if self.is_zero() {
            return Summability::Summable(T::zero());
        }
        let r = self.ratio.abs();
        if r > T::one() {
            return Summability::Divergent;
        }
        if r == T::one() {
            if self.exponent <= T::one() {
                return Summability::Divergent;
            }
            let s = self.exponent;
            if self.ratio > T::zero() {
                return Summability::Summable(self.scale * hurwitz_zeta(s, T::from_usize_lossy(n + 1)));
            }
            // ratio = −1: split even and odd indices.
            let half = T::lit(0.5);
            let two_pow = T::lit(2.0).powf(-s);
            let even_start = T::from_usize_lossy(n / 2 + 1);
            let odd_start = T::from_usize_lossy(n.div_ceil(2)) + half;
            let even = two_pow * hurwitz_zeta(s, even_start);
            let odd = two_pow * hurwitz_zeta(s, odd_start);
            return Summability::Summable(self.scale * (even - odd));
        }
        if self.exponent == T::zero() {
            // geometric: scale · r^(n+1) / (1 − r)
            let first = self.ratio.powi((n + 1) as i32);
            return Summability::Summable(self.scale * first / (T::one() - self.ratio));
        }
        Summability::Summable(self.direct_sum_from(n))
    }

    /// Term-by-term summation for `|ratio| < 1` with a geometric remainder bound.
    fn direct_sum_from(&self, n: usize) -> T {
        let r = self.ratio.abs();
        let eps = T::epsilon();
        let mut terms = Vec::new();
        let mut i = n + 1;
        loop {
            let t = self.value(i);
            terms.push(t);
            // ratio of consecutive magnitudes past i
            let q = r * (T::from_usize_lossy(i) / T::from_usize_lossy(i + 1)).powf(self.exponent);
            if q < T::one() {
                let bound = t.abs() * q / (T::one() - q);
                let partial = compensated_sum(terms.iter().copied());
                if bound <= eps * partial.abs() || bound <= T::min_positive_value() || t == T::zero() {
                    return partial;
                }
            }
            i += 1;
            if i > n + 50_000_000 {
                return compensated_sum(terms.iter().copied());
            }
        }
    }
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^(−s)` for `s > 1`, `a > 0`, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta<T: Scalar>(s: T, a: T) -> T {
    // B_{2j} / (2j)!
    const COEFFS: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
    ];
    let target = T::lit(20.0);
    let mut head = Vec::new();
    let mut x = a;
    while x < target {
        head.push(x.powf(-s));
        x = x + T::one();
    }
    let mut tail = x.powf(T::one() - s) / (s - T::one()) + T::lit(0.5) * x.powf(-s);
    // rising factorial s (s+1) ... (s+2j−2) times x^(−s−2j+1)
    let mut rising = s;
    let mut xpow = x.powf(-s - T::one());
    let x2 = x * x;
    for (j, &c) in COEFFS.iter().enumerate() {
        tail = tail + T::lit(c) * rising * xpow;
        let jj = T::from_usize_lossy(2 * j + 1);
        rising = rising * (s + jj) * (s + jj + T::one());
        xpow = xpow / x2;
    }
    compensated_sum(head.into_iter().rev()) + tail
}

/// A real sequence indexed from 1: dense prefix, then an optional tail rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<T> {
    prefix: Vec<T>,
    tail: Option<TailRule<T>>,
}

impl<T: Scalar> Sequence<T> {
    pub fn finite(prefix: Vec<T>) -> Self {
        Self { prefix, tail: None }
    }

    /// Prefix followed by `tail`; a zero rule records that every later value
    /// vanishes, which is different from having no rule at all.
    pub fn with_tail(prefix: Vec<T>, tail: TailRule<T>) -> Self {
        Self { prefix, tail: Some(tail) }
    }

    pub fn from_rule(rule: TailRule<T>) -> Self {
        Self::with_tail(Vec::new(), rule)
    }

    pub fn zeros(len: usize) -> Self {
        Self::finite(vec![T::zero(); len])
    }

    pub fn prefix(&self) -> &[T] {
        &self.prefix
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn tail(&self) -> Option<&TailRule<T>> {
        self.tail.as_ref()
    }

    pub fn has_tail(&self) -> bool {
        self.tail.is_some()
    }

    /// Value at 1-based index `i`; zero past the prefix when there is no rule.
    #[inline]
    pub fn get(&self, i: usize) -> T {
        assert!(i >= 1, "sequences are indexed from 1");
        if i <= self.prefix.len() {
            self.prefix[i - 1]
        } else {
            self.tail.map_or(T::zero(), |r| r.value(i))
        }
    }

    /// First `k` values (indices `1..=k`).
    pub fn values(&self, k: usize) -> Vec<T> {
        (1..=k).map(|i| self.get(i)).collect()
    }

    /// Largest index with a nonzero value, `None` when the tail is nonzero.
    pub fn support(&self) -> Option<usize> {
        if self.tail.is_some_and(|r| !r.is_zero()) {
            return None;
        }
        Some(
            self.prefix
                .iter()
                .rposition(|&x| x != T::zero())
                .map_or(0, |p| p + 1),
        )
    }

    /// Truncation `(x_1, …, x_n, 0, 0, …)`.
    pub fn truncated(&self, n: usize) -> Self {
        Self::finite(self.values(n))
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            prefix: self.prefix.iter().map(|&x| x * factor).collect(),
            tail: self.tail.map(|r| r.scaled(factor)),
        }
    }

    /// `Σ_{i>n} x_i²`.
    pub fn sum_sq_from(&self, n: usize) -> Summability<T> {
        self.dot_from(self, n)
    }

    /// `Σ_i x_i²`.
    pub fn sum_sq(&self) -> Summability<T> {
        self.sum_sq_from(0)
    }

    /// `Σ_{i>n} x_i y_i`, absolutely summable or reported divergent.
    pub fn dot_from(&self, other: &Self, n: usize) -> Summability<T> {
        let dense_end = self.prefix.len().max(other.prefix.len());
        let head = if n < dense_end {
            compensated_sum(((n + 1)..=dense_end).map(|i| self.get(i) * other.get(i)))
        } else {
            T::zero()
        };
        let start = n.max(dense_end);
        let tail = match (self.tail, other.tail) {
            (Some(a), Some(b)) => a.product(&b).sum_from(start),
            _ => Summability::Summable(T::zero()),
        };
        tail.map(|t| t + head)
    }

    pub fn dot(&self, other: &Self) -> Summability<T> {
        self.dot_from(other, 0)
    }

    /// `Σ_{i>n} x_i`, if absolutely summable.
    pub fn sum_from(&self, n: usize) -> Summability<T> {
        let head = if n < self.prefix.len() {
            compensated_sum(self.prefix[n..].iter().copied())
        } else {
            T::zero()
        };
        let tail = self
            .tail
            .map_or(Summability::Summable(T::zero()), |r| r.sum_from(n.max(self.prefix.len())));
        Summability::Summable(head).plus(tail)
    }

    /// Pointwise `a·self + other`.
    pub fn axpy(&self, a: T, other: &Self) -> Result<Self> {
        let len = self.prefix.len().max(other.prefix.len());
        let prefix = (1..=len).map(|i| a * self.get(i) + other.get(i)).collect();
        let tail = match (self.tail, other.tail) {
            (None, None) => None,
            (Some(r), None) => Some(r.scaled(a)),
            (None, Some(r)) => Some(r),
            (Some(r1), Some(r2)) if r1.ratio == r2.ratio && r1.exponent == r2.exponent => {
                Some(TailRule {
                    scale: a * r1.scale + r2.scale,
                    ..r1
                })
            }
            _ => {
                return Err(ApmError::InvalidParameter(
                    "sum of two sequences with incompatible tail rules has no closed form".into(),
                ))
            }
        };
        Ok(Self { prefix, tail })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute<T: Scalar>(rule: &TailRule<T>, n: usize, upto: usize) -> f64 {
        compensated_sum(((n + 1)..=upto).map(|i| rule.value(i).to_f64_lossy()))
    }

    #[test]
    fn geometric_square_sum_is_one_third() {
        let b = Sequence::from_rule(TailRule::geometric(1.0, 0.5));
        assert_relative_eq!(b.sum_sq().value().unwrap(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn constant_rule_diverges() {
        let b = Sequence::from_rule(TailRule::constant(1.0_f64));
        assert_eq!(b.sum_sq(), Summability::Divergent);
        assert_eq!(Sequence::<f64>::zeros(4).sum_sq(), Summability::Summable(0.0));
    }

    #[test]
    fn hurwitz_matches_known_values() {
        // ζ(2) = π²/6
        assert_relative_eq!(hurwitz_zeta(2.0, 1.0), std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-14);
        // ζ(4, 1) = π⁴/90
        assert_relative_eq!(hurwitz_zeta(4.0, 1.0), std::f64::consts::PI.powi(4) / 90.0, max_relative = 1e-14);
        // ζ(2, 1/2) = π²/2
        assert_relative_eq!(hurwitz_zeta(2.0, 0.5), std::f64::consts::PI.powi(2) / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn power_tail_against_brute_force() {
        let rule = TailRule::power(3.0, 3.0);
        // brute force up to 10^6 plus integral remainder 3·∫_{N}^{∞} x^{-3} ≈ 1.5/N²
        let n = 7;
        let upto = 1_000_000;
        let brute_value = brute(&rule, n, upto) + 3.0 * 0.5 / (upto as f64 + 0.5).powi(2);
        // midpoint remainder is accurate to O(N⁻⁴)
        assert_relative_eq!(rule.sum_from(n).value().unwrap(), brute_value, max_relative = 1e-12);
    }

    #[test]
    fn alternating_power_tail_against_brute_force() {
        let rule = TailRule { scale: 1.0, ratio: -1.0, exponent: 2.0 };
        for n in [0usize, 1, 4, 9] {
            let upto = 2_000_000;
            let b = brute(&rule, n, upto);
            assert!((rule.sum_from(n).value().unwrap() - b).abs() < 1e-12, "n={n}");
        }
        // Σ_{i≥1} (−1)^i / i² = −π²/12
        assert_relative_eq!(
            rule.sum_from(0).value().unwrap(),
            -std::f64::consts::PI.powi(2) / 12.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn mixed_geometric_power_tail() {
        let rule = TailRule { scale: 2.0, ratio: 0.9, exponent: 1.5 };
        let b = brute(&rule, 3, 2000);
        assert_relative_eq!(rule.sum_from(3).value().unwrap(), b, max_relative = 1e-13);
        let growing = TailRule { scale: 1.0, ratio: 0.5, exponent: -2.0 };
        assert_relative_eq!(growing.sum_from(0).value().unwrap(), brute(&growing, 0, 500), max_relative = 1e-13);
    }

    #[test]
    fn prefix_overrides_rule_and_dot_combines() {
        let a = Sequence::with_tail(vec![5.0, 5.0], TailRule::geometric(1.0, 0.5));
        assert_eq!(a.get(1), 5.0);
        assert_eq!(a.get(3), 0.125);
        let full: f64 = 50.0 + (3..200).map(|i| 0.25f64.powi(i)).sum::<f64>();
        assert_relative_eq!(a.sum_sq().value().unwrap(), full, max_relative = 1e-14);
        let b = Sequence::finite(vec![1.0, 2.0, 3.0]);
        assert_relative_eq!(a.dot(&b).value().unwrap(), 5.0 + 10.0 + 0.375, max_relative = 1e-15);
    }

    #[test]
    fn support_and_truncation() {
        let s = Sequence::finite(vec![1.0, 0.0, 2.0, 0.0]);
        assert_eq!(s.support(), Some(3));
        let t = Sequence::from_rule(TailRule::geometric(1.0, 0.5)).truncated(4);
        assert_eq!(t.support(), Some(4));
        assert_eq!(t.get(5), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let b = Sequence::from_rule(TailRule::geometric(1.0f32, 0.5));
        assert!((b.sum_sq().value().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }
}
