//! Factor-model parameterization and the exact transforms between raw asset
//! positions and factor-space strategies.
//!
//! Asset returns are `R_0 = 0`, `R_i = μ_i + β̄_i ε_i` for `i ≤ m` and
//! `R_i = μ_i + Σ_j β_i^j ε_j + β̄_i ε_i` for `i > m`. With the reduced
//! parameters `b_i` every return becomes a combination of `J_i = ε_i − b_i`,
//! so a portfolio value is `V(φ) = Σ φ_i (ε_i − b_i)`.

use crate::error::{invalid, ApmError, Result};
use crate::scalar::{compensated_sum, Scalar};
use crate::sequence::{Sequence, Summability};

/// Riskless rate; the model fixes it at zero.
pub const RISKLESS_RATE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams<T> {
    m: usize,
    mu: Sequence<T>,
    /// Row `r` holds `β_{m+1+r}^1, …, β_{m+1+r}^m`.
    beta: Vec<Vec<T>>,
    bar_beta: Sequence<T>,
}

impl<T: Scalar> MarketParams<T> {
    pub fn new(m: usize, mu: Sequence<T>, beta: Vec<Vec<T>>, bar_beta: Sequence<T>) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m must be a positive number of factors"));
        }
        for (r, row) in beta.iter().enumerate() {
            if row.len() != m {
                return Err(invalid(format!(
                    "beta row for asset {} has {} entries, expected m = {m}",
                    m + 1 + r,
                    row.len()
                )));
            }
        }
        for (i, &bb) in bar_beta.prefix().iter().enumerate() {
            if bb == T::zero() || !bb.is_finite() {
                return Err(ApmError::ZeroBarBeta { index: i + 1 });
            }
        }
        if let Some(rule) = bar_beta.tail() {
            if rule.is_zero() {
                return Err(ApmError::ZeroBarBeta { index: bar_beta.prefix_len() + 1 });
            }
        }
        Ok(Self { m, mu, beta, bar_beta })
    }

    pub fn factors(&self) -> usize {
        self.m
    }

    pub fn mu(&self) -> &Sequence<T> {
        &self.mu
    }

    pub fn bar_beta(&self) -> &Sequence<T> {
        &self.bar_beta
    }

    /// `β_i^j` for `i > m`, `1 ≤ j ≤ m`.
    pub fn beta(&self, i: usize, j: usize) -> Result<T> {
        debug_assert!(i > self.m && (1..=self.m).contains(&j));
        self.beta
            .get(i - self.m - 1)
            .map(|row| row[j - 1])
            .ok_or(ApmError::MissingCoefficient { name: "beta", index: i })
    }

    /// Number of assets with fully specified coefficients (infinite if every
    /// sequence has a rule and the market has no idiosyncratic rows).
    pub fn defined_assets(&self) -> usize {
        let mu_len = if self.mu.has_tail() { usize::MAX } else { self.mu.prefix_len() };
        let bb_len = if self.bar_beta.has_tail() { usize::MAX } else { self.bar_beta.prefix_len() };
        mu_len.min(bb_len).min(self.m + self.beta.len())
    }

    fn checked_bar_beta(&self, i: usize) -> Result<T> {
        let v = self.bar_beta.get(i);
        if !self.bar_beta.has_tail() && i > self.bar_beta.prefix_len() {
            return Err(ApmError::MissingCoefficient { name: "bar_beta", index: i });
        }
        if v == T::zero() || !v.is_finite() {
            return Err(ApmError::ZeroBarBeta { index: i });
        }
        Ok(v)
    }

    fn checked_mu(&self, i: usize) -> Result<T> {
        if !self.mu.has_tail() && i > self.mu.prefix_len() {
            return Err(ApmError::MissingCoefficient { name: "mu", index: i });
        }
        Ok(self.mu.get(i))
    }

    /// Reduced parameters `b_1, …, b_k`.
    pub fn reduce(&self, k: usize) -> Result<ReducedParams<T>> {
        if k == 0 {
            return Err(invalid("segment size k must be at least 1"));
        }
        let mut b = Vec::with_capacity(k);
        for i in 1..=k {
            let own = -self.checked_mu(i)? / self.checked_bar_beta(i)?;
            if i <= self.m {
                b.push(own);
            } else {
                let bar_i = self.checked_bar_beta(i)?;
                let mut factor_part = T::zero();
                for j in 1..=self.m {
                    factor_part += self.checked_mu(j)? * self.beta(i, j)?
                        / (self.checked_bar_beta(j)? * bar_i);
                }
                b.push(own + factor_part);
            }
        }
        Ok(ReducedParams::new(Sequence::finite(b), TailKnowledge::Unknown))
    }

    /// Factor-space strategy of a raw portfolio `ψ_1, …, ψ_k` (ψ_0 is implied
    /// by self-financing and does not affect the value since `R_0 = 0`).
    pub fn raw_to_factor(&self, psi: &[T]) -> Result<Strategy<T>> {
        let k = psi.len();
        let mut phi = Vec::with_capacity(k);
        for (idx, &p) in psi.iter().enumerate() {
            phi.push(p * self.checked_bar_beta(idx + 1)?);
        }
        for i in 1..=self.m.min(k) {
            let loading: Vec<T> = ((self.m + 1)..=k)
                .map(|l| Ok(psi[l - 1] * self.beta(l, i)?))
                .collect::<Result<_>>()?;
            phi[i - 1] += compensated_sum(loading);
        }
        Strategy::new(Sequence::finite(phi))
    }

    /// Raw portfolio `ψ_0, …, ψ_k` realizing a finite-support strategy, with
    /// `ψ_0 = −Σ_{i≥1} ψ_i`.
    pub fn factor_to_raw(&self, phi: &Strategy<T>) -> Result<RawPortfolio<T>> {
        let k = phi
            .segment()
            .ok_or_else(|| invalid("factor_to_raw needs a finite-support strategy"))?;
        let mut psi = vec![T::zero(); k + 1];
        for l in (self.m + 1)..=k {
            let bb = self.checked_bar_beta(l).map_err(|_| ApmError::SingularTransform { index: l })?;
            psi[l] = phi.coefficient(l) / bb;
        }
        for i in 1..=self.m.min(k) {
            let bb = self.checked_bar_beta(i).map_err(|_| ApmError::SingularTransform { index: i })?;
            let loading: Vec<T> = ((self.m + 1)..=k)
                .map(|l| Ok(psi[l] * self.beta(l, i)?))
                .collect::<Result<_>>()?;
            psi[i] = (phi.coefficient(i) - compensated_sum(loading)) / bb;
        }
        psi[0] = -compensated_sum(psi[1..].iter().copied());
        Ok(RawPortfolio { psi })
    }

    /// Return of asset `i ≥ 1` given shock values `eps[j-1] = ε_j`.
    pub fn asset_return(&self, i: usize, eps: &[T]) -> Result<T> {
        let mut r = self.checked_mu(i)? + self.checked_bar_beta(i)? * eps[i - 1];
        if i > self.m {
            for j in 1..=self.m {
                r += self.beta(i, j)? * eps[j - 1];
            }
        }
        Ok(r)
    }
}

/// Whether the reduced sequence is known beyond its prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKnowledge {
    /// A closed-form rule (or an explicit statement that all later values
    /// vanish) is part of the sequence.
    Known,
    /// Only the prefix was computed; nothing is asserted about later indices.
    Unknown,
}

/// Reduced parameters `b_i` with memoized partial Sharpe sums
/// `S_k = Σ_{i≤k} b_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedParams<T> {
    b: Sequence<T>,
    knowledge: TailKnowledge,
    sharpe_partial: Vec<T>,
}

/// Partial and (when decidable) total squared Sharpe ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpeSum<T> {
    pub k: usize,
    pub partial: T,
    /// `Σ_i b_i²` over all indices; `None` when the tail is unknown.
    pub total: Option<Summability<T>>,
}

impl<T: Scalar> ReducedParams<T> {
    pub fn new(b: Sequence<T>, knowledge: TailKnowledge) -> Self {
        let knowledge = if b.has_tail() { TailKnowledge::Known } else { knowledge };
        let mut sharpe_partial = Vec::with_capacity(b.prefix_len());
        let mut acc = crate::scalar::CompensatedSum::new();
        for &x in b.prefix() {
            acc.add(x * x);
            sharpe_partial.push(acc.value());
        }
        Self { b, knowledge, sharpe_partial }
    }

    /// Reduced parameters given directly by a rule, with no prefix.
    pub fn from_rule(rule: crate::sequence::TailRule<T>) -> Self {
        Self::new(Sequence::from_rule(rule), TailKnowledge::Known)
    }

    /// A finite vector of `b` values with nothing asserted beyond it.
    pub fn from_prefix(b: Vec<T>) -> Self {
        Self::new(Sequence::finite(b), TailKnowledge::Unknown)
    }

    pub fn sequence(&self) -> &Sequence<T> {
        &self.b
    }

    pub fn knowledge(&self) -> TailKnowledge {
        self.knowledge
    }

    pub fn get(&self, i: usize) -> T {
        self.b.get(i)
    }

    pub fn values(&self, k: usize) -> Vec<T> {
        self.b.values(k)
    }

    /// `S_k`, with the exact total or a divergence flag when the tail is known.
    pub fn sharpe_sum(&self, k: usize) -> Result<SharpeSum<T>> {
        if k == 0 {
            return Err(invalid("sharpe_sum needs k ≥ 1"));
        }
        if k > self.b.prefix_len() && !self.b.has_tail() && self.knowledge == TailKnowledge::Unknown {
            return Err(ApmError::MissingCoefficient { name: "b", index: self.b.prefix_len() + 1 });
        }
        let partial = if k <= self.sharpe_partial.len() {
            self.sharpe_partial[k - 1]
        } else {
            let head = self.sharpe_partial.last().copied().unwrap_or_else(T::zero);
            let rest = compensated_sum(((self.sharpe_partial.len() + 1)..=k).map(|i| {
                let x = self.b.get(i);
                x * x
            }));
            head + rest
        };
        let total = match self.knowledge {
            TailKnowledge::Known => Some(self.b.sum_sq()),
            TailKnowledge::Unknown => None,
        };
        Ok(SharpeSum { k, partial, total })
    }
}

/// Admissible strategy: a square-summable coefficient sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy<T> {
    phi: Sequence<T>,
    norm_sq: T,
}

impl<T: Scalar> Strategy<T> {
    pub fn new(phi: Sequence<T>) -> Result<Self> {
        match phi.sum_sq() {
            Summability::Summable(norm_sq) if norm_sq.is_finite() => Ok(Self { phi, norm_sq }),
            _ => Err(ApmError::DivergentTail("strategy is not square summable".into())),
        }
    }

    pub fn from_vec(phi: Vec<T>) -> Self {
        Self::new(Sequence::finite(phi)).expect("finite vectors are square summable")
    }

    pub fn zero() -> Self {
        Self::from_vec(Vec::new())
    }

    pub fn sequence(&self) -> &Sequence<T> {
        &self.phi
    }

    #[inline]
    pub fn coefficient(&self, i: usize) -> T {
        self.phi.get(i)
    }

    pub fn norm_sq(&self) -> T {
        self.norm_sq
    }

    pub fn norm(&self) -> T {
        self.norm_sq.sqrt()
    }

    /// Max index with a nonzero coefficient, `None` for infinite support.
    pub fn segment(&self) -> Option<usize> {
        self.phi.support()
    }

    pub fn values(&self, k: usize) -> Vec<T> {
        self.phi.values(k)
    }

    /// `φ̄(n)`: first `n` coefficients kept, the rest zeroed.
    pub fn truncated(&self, n: usize) -> Self {
        Self::new(self.phi.truncated(n)).expect("truncation of an admissible strategy")
    }

    /// `a·self + other`.
    pub fn axpy(&self, a: T, other: &Self) -> Result<Self> {
        Self::new(self.phi.axpy(a, &other.phi)?)
    }
}

/// Raw asset positions `ψ_0, …, ψ_k` (riskless asset first).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPortfolio<T> {
    pub psi: Vec<T>,
}

impl<T: Scalar> RawPortfolio<T> {
    /// Positions in the risky assets `1..=k`.
    pub fn risky(&self) -> &[T] {
        &self.psi[1..]
    }

    pub fn total_position(&self) -> T {
        compensated_sum(self.psi.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::TailRule;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, prop_oneof, proptest};
    use proptest::strategy::Strategy as PropStrategy;

    fn one_factor() -> MarketParams<f64> {
        MarketParams::new(
            1,
            Sequence::finite(vec![0.1, 0.05]),
            vec![vec![0.3]],
            Sequence::finite(vec![0.2, 0.1]),
        )
        .unwrap()
    }

    #[test]
    fn reduction_single_factor_asset() {
        let m = MarketParams::new(1, Sequence::finite(vec![0.1]), vec![], Sequence::finite(vec![0.2])).unwrap();
        let r = m.reduce(1).unwrap();
        assert_relative_eq!(r.get(1), -0.5, max_relative = 1e-15);
    }

    #[test]
    fn reduction_idiosyncratic_asset() {
        let r = one_factor().reduce(2).unwrap();
        assert_relative_eq!(r.get(1), -0.5, max_relative = 1e-15);
        assert_relative_eq!(r.get(2), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_means_give_zero_b() {
        let m = MarketParams::new(
            2,
            Sequence::from_rule(TailRule::zero()),
            vec![vec![0.4, -0.2]; 5],
            Sequence::from_rule(TailRule::constant(0.7)),
        )
        .unwrap();
        assert!(m.reduce(7).unwrap().values(7).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_bar_beta_is_named() {
        let err = MarketParams::new(1, Sequence::finite(vec![0.1, 0.2]), vec![vec![1.0]], Sequence::finite(vec![1.0, 0.0]))
            .unwrap_err();
        assert_eq!(err, ApmError::ZeroBarBeta { index: 2 });
    }

    #[test]
    fn missing_beta_row_is_reported() {
        let err = one_factor().reduce(3).unwrap_err();
        assert!(matches!(err, ApmError::MissingCoefficient { index: 3, .. }));
    }

    #[test]
    fn raw_to_factor_examples() {
        let m = one_factor();
        let phi = m.raw_to_factor(&[1.0]).unwrap();
        assert_relative_eq!(phi.coefficient(1), 0.2);
        let phi = m.raw_to_factor(&[0.0, 1.0]).unwrap();
        assert_relative_eq!(phi.coefficient(1), 0.3);
        assert_relative_eq!(phi.coefficient(2), 0.1);
        let zero = m.raw_to_factor(&[0.0, 0.0]).unwrap();
        assert_eq!(zero.norm_sq(), 0.0);
    }

    #[test]
    fn factor_to_raw_examples() {
        let m = one_factor();
        let raw = m.factor_to_raw(&Strategy::from_vec(vec![0.2])).unwrap();
        assert_relative_eq!(raw.psi[0], -1.0, max_relative = 1e-15);
        assert_relative_eq!(raw.psi[1], 1.0, max_relative = 1e-15);
        let raw = m.factor_to_raw(&Strategy::zero()).unwrap();
        assert_eq!(raw.psi, vec![0.0]);
    }

    #[test]
    fn value_identity_holds_pointwise() {
        // V(ψ) = Σ ψ_i R_i must equal Σ φ_i (ε_i − b_i).
        let m = one_factor();
        let b = m.reduce(2).unwrap();
        let psi = [0.7, -1.3];
        let phi = m.raw_to_factor(&psi).unwrap();
        for eps in [[0.3, -1.2], [2.0, 0.5], [-0.4, 0.0]] {
            let raw: f64 = (1..=2).map(|i| psi[i - 1] * m.asset_return(i, &eps).unwrap()).sum();
            let fac: f64 = (1..=2).map(|i| phi.coefficient(i) * (eps[i - 1] - b.get(i))).sum();
            assert_relative_eq!(raw, fac, max_relative = 1e-13);
        }
    }

    #[test]
    fn sharpe_sum_cases() {
        let geo = ReducedParams::from_rule(TailRule::geometric(1.0, 0.5));
        let s = geo.sharpe_sum(3).unwrap();
        assert_relative_eq!(s.partial, 0.25 + 0.0625 + 0.015625);
        assert_relative_eq!(s.total.unwrap().value().unwrap(), 1.0 / 3.0, max_relative = 1e-15);

        let zero = ReducedParams::new(Sequence::<f64>::zeros(5), TailKnowledge::Known);
        assert_eq!(zero.sharpe_sum(5).unwrap().partial, 0.0);

        let ones = ReducedParams::from_rule(TailRule::constant(1.0));
        let s = ones.sharpe_sum(10).unwrap();
        assert_eq!(s.partial, 10.0);
        assert_eq!(s.total, Some(Summability::Divergent));

        let unknown = ReducedParams::from_prefix(vec![1.0, 2.0]);
        assert_eq!(unknown.sharpe_sum(2).unwrap().total, None);
        assert!(unknown.sharpe_sum(3).is_err());
    }

    fn random_market() -> impl PropStrategy<Value = (MarketParams<f64>, Vec<f64>)> {
        (1usize..4, 1usize..10).prop_flat_map(|(m, extra)| {
            let k = m + extra;
            (
                proptest::collection::vec(-0.5f64..0.5, k),
                proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, m), extra),
                proptest::collection::vec(prop_oneof![0.05f64..2.0, -2.0f64..-0.05], k),
                proptest::collection::vec(-5.0f64..5.0, k),
            )
                .prop_map(move |(mu, beta, bb, psi)| {
                    (
                        MarketParams::new(m, Sequence::finite(mu), beta, Sequence::finite(bb)).unwrap(),
                        psi,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_self_financing((market, psi) in random_market()) {
            let phi = market.raw_to_factor(&psi).unwrap();
            let phi_full = Strategy::from_vec(phi.values(psi.len()));
            let raw = market.factor_to_raw(&phi_full).unwrap();
            let k = phi_full.segment().unwrap();
            for i in 1..=psi.len() {
                let back = if i <= k { raw.psi[i] } else { 0.0 };
                let scale = psi.iter().fold(1.0f64, |a, x| a.max(x.abs()));
                prop_assert!((back - psi[i - 1]).abs() <= 1e-12 * scale);
            }
            prop_assert!(raw.total_position().abs() <= 1e-12 * (1.0 + raw.psi[0].abs()));
        }

        #[test]
        fn reduction_is_homogeneous((market, _psi) in random_market(), lambda in -3.0f64..3.0) {
            let k = market.defined_assets();
            let b = market.reduce(k).unwrap();
            let scaled = MarketParams::new(
                market.factors(),
                market.mu().scaled(lambda),
                market.beta.clone(),
                market.bar_beta().clone(),
            ).unwrap();
            let bs = scaled.reduce(k).unwrap();
            for i in 1..=k {
                prop_assert!((bs.get(i) - lambda * b.get(i)).abs() <= 1e-12 * (1.0 + b.get(i).abs()));
            }
        }

        #[test]
        fn sharpe_sum_monotone_and_additive(b in proptest::collection::vec(-2.0f64..2.0, 1..40)) {
            let r = ReducedParams::from_prefix(b.clone());
            for k in 1..b.len() {
                let s0 = r.sharpe_sum(k).unwrap().partial;
                let s1 = r.sharpe_sum(k + 1).unwrap().partial;
                prop_assert!(s1 >= s0);
                prop_assert!((s1 - s0 - b[k] * b[k]).abs() <= 1e-12 * (1.0 + s1));
            }
        }
    }
}
