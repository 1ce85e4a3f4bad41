//! Asymptotic arbitrage diagnostics: the squared-Sharpe test with an
//! explicit arbitrage sequence when it diverges, the two-point free-lunch
//! and closedness counterexamples, and the Gaussian limit of normalized
//! strategies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, ApmError, Result};
use crate::market::{ReducedParams, Strategy, TailKnowledge};
use crate::scalar::{CompensatedSum, Scalar};
use crate::sequence::Summability;
use crate::shocks::{fill_column, ShockFamily};
use crate::valuation::value_moments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpeVerdict {
    Summable,
    Diverging,
    /// Only a prefix of `b` is known; no claim is made.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageRow {
    pub k: usize,
    pub sharpe: f64,
    /// `E V(φ(k))` and `var V(φ(k))` of the constructed strategy, computed
    /// by the analytic moment formulas.
    pub expected_value: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageReport {
    pub verdict: SharpeVerdict,
    pub sharpe_total: Option<f64>,
    /// First grid point with `S_k > 0`; the construction starts there.
    pub k0: Option<usize>,
    pub rows: Vec<ArbitrageRow>,
}

/// `S^{1/4}` through two square roots, exact whenever `S` is a power of 16.
fn fourth_root(s: f64) -> f64 {
    s.sqrt().sqrt()
}

/// Sharpe sums on `k_grid` and, when `Σ b_i²` diverges, the strategies
/// `φ_i(k) = −b_i S_k^{−3/4}` (`i ≤ k`) with `E V = S_k^{1/4}` and
/// `var V = S_k^{−1/2}`. Any exponent in `(1/2, 1)` would do; `3/4` is fixed
/// so reports are comparable.
pub fn asymptotic_arbitrage_construct<T: Scalar>(b: &ReducedParams<T>, k_grid: &[usize]) -> Result<ArbitrageReport> {
    if k_grid.is_empty() || k_grid.windows(2).any(|w| w[0] >= w[1]) || k_grid[0] == 0 {
        return Err(invalid("k_grid must be strictly ascending and start at k ≥ 1"));
    }
    let (verdict, sharpe_total) = match b.knowledge() {
        TailKnowledge::Unknown => (SharpeVerdict::Inconclusive, None),
        TailKnowledge::Known => match b.sequence().sum_sq() {
            Summability::Summable(s) => (SharpeVerdict::Summable, Some(s.to_f64_lossy())),
            Summability::Divergent => (SharpeVerdict::Diverging, None),
        },
    };
    let mut rows = Vec::with_capacity(k_grid.len());
    let mut k0 = None;
    for &k in k_grid {
        let s = b.sharpe_sum(k)?.partial;
        let sf = s.to_f64_lossy();
        let (mut ev, mut var) = (None, None);
        if verdict == SharpeVerdict::Diverging && sf > 0.0 {
            k0.get_or_insert(k);
            let q = fourth_root(sf);
            let factor = T::lit(-1.0 / (q * q * q));
            let phi = Strategy::new(b.sequence().truncated(k).scaled(factor))?;
            let m = value_moments(&phi, b)?;
            ev = Some(m.mean.to_f64_lossy());
            var = Some(m.variance.to_f64_lossy());
        }
        rows.push(ArbitrageRow { k, sharpe: sf, expected_value: ev, variance: var });
    }
    Ok(ArbitrageReport { verdict, sharpe_total, k0: if verdict == SharpeVerdict::Diverging { k0 } else { None }, rows })
}

/// Indices handled per parallel work item in path simulations. Fixed, so
/// the floating point summation order never depends on the thread count.
const INDEX_CHUNK: usize = 1024;
/// Chunks materialized at once before folding into the running sums.
const CHUNK_BATCH: usize = 64;

/// Per checkpoint `c` and path `j`, the sum `Σ_{i=first}^{c} w(i) ε_{j,i}`.
/// Paths are draws, indices are streams, so path `j` is the same across
/// runs with different checkpoint sets.
pub fn stream_weighted_sums<W>(
    family: &ShockFamily,
    seed: u64,
    first: usize,
    checkpoints: &[usize],
    n_paths: usize,
    weight: W,
) -> Result<Vec<Vec<f64>>>
where
    W: Fn(usize) -> f64 + Sync,
{
    family.validate()?;
    if n_paths == 0 || first == 0 {
        return Err(invalid("path simulation needs n_paths ≥ 1 and first index ≥ 1"));
    }
    if checkpoints.is_empty() || checkpoints[0] < first || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("checkpoints must be strictly ascending and not below the first index"));
    }
    let last = *checkpoints.last().unwrap();
    let n_chunks = (last - first) / INDEX_CHUNK + 1;
    let mut running = vec![0.0f64; n_paths];
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(checkpoints.len());
    let mut batch_start = 0;
    while batch_start < n_chunks {
        let batch_end = (batch_start + CHUNK_BATCH).min(n_chunks);
        // Each chunk yields its own partial sums plus snapshots at the
        // checkpoints it contains.
        let parts: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (batch_start..batch_end)
            .into_par_iter()
            .map(|c| {
                let lo = first + c * INDEX_CHUNK;
                let hi = (lo + INDEX_CHUNK - 1).min(last);
                let mut partial = vec![0.0f64; n_paths];
                let mut snaps = Vec::new();
                let mut col = vec![0.0f64; n_paths];
                let mut next_cp = checkpoints.partition_point(|&cp| cp < lo);
                for i in lo..=hi {
                    fill_column(family, i, seed, 0, &mut col);
                    let w = weight(i);
                    for (p, &e) in partial.iter_mut().zip(&col) {
                        *p += w * e;
                    }
                    if next_cp < checkpoints.len() && checkpoints[next_cp] == i {
                        snaps.push(partial.clone());
                        next_cp += 1;
                    }
                }
                (partial, snaps)
            })
            .collect();
        for (partial, snaps) in parts {
            for s in snaps {
                out.push(running.iter().zip(&s).map(|(a, b)| a + b).collect());
            }
            running.iter_mut().zip(&partial).for_each(|(a, b)| *a += b);
        }
        batch_start = batch_end;
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const REPORTED_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub mean: f64,
    pub quantiles: Vec<f64>,
    /// Fraction of paths strictly above the report's threshold.
    pub fraction_above: f64,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeLunchReport {
    pub threshold: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub rows: Vec<TrajectoryRow>,
    pub sharpe_total: f64,
    pub note: String,
}

fn require_aba(family: &ShockFamily) -> Result<()> {
    if *family != ShockFamily::TwoPointAba {
        return Err(ApmError::UnsupportedShock(format!(
            "this demonstration needs the two_point_aba family, got {}",
            family.label()
        )));
    }
    Ok(())
}

fn check_grid(k_grid: &[usize]) -> Result<()> {
    if k_grid.is_empty() || k_grid[0] < 2 || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("k_grid must be strictly ascending with k ≥ 2"));
    }
    Ok(())
}

fn summarize(values: &[f64], threshold: f64) -> (f64, Vec<f64>, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = CompensatedSum::from_iter(values.iter().copied()).value() / values.len() as f64;
    let qs = REPORTED_QUANTILES.iter().map(|&q| quantile_sorted(&sorted, q)).collect();
    let above = values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64;
    (mean, qs, above)
}

/// Paths of `V(φ(k)) = Σ_{i=2}^k ε_i` (all `b_i = 0`) under the two-point
/// family.
pub fn free_lunch_demo_aba(
    family: &ShockFamily,
    k_grid: &[usize],
    seed: u64,
    n_paths: usize,
    threshold: f64,
) -> Result<FreeLunchReport> {
    require_aba(family)?;
    check_grid(k_grid)?;
    let sums = stream_weighted_sums(family, seed, 2, k_grid, n_paths, |_| 1.0)?;
    let rows = k_grid
        .iter()
        .zip(&sums)
        .map(|(&k, v)| {
            let (mean, quantiles, fraction_above) = summarize(v, threshold);
            TrajectoryRow { k, mean, quantiles, fraction_above, analytic_mean: 0.0, analytic_variance: (k - 1) as f64 }
        })
        .collect();
    Ok(FreeLunchReport {
        threshold,
        n_paths,
        seed,
        rows,
        sharpe_total: 0.0,
        note: "every b_i is 0, so the squared Sharpe sum is 0, yet the unit strategies drift to +infinity almost surely"
            .into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosednessRow {
    pub k: usize,
    pub median: f64,
    pub distance_to_one: f64,
    pub quantiles: Vec<f64>,
    /// `(k − 1)/ln² k`.
    pub analytic_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosednessReport {
    pub n_paths: usize,
    pub seed: u64,
    pub rows: Vec<ClosednessRow>,
    pub conclusion: String,
}

/// Paths of `V(λ(k)) = (1/ln k) Σ_{i=2}^k ε_i`.
pub fn closedness_failure_demo(family: &ShockFamily, k_grid: &[usize], seed: u64, n_paths: usize) -> Result<ClosednessReport> {
    require_aba(family)?;
    check_grid(k_grid)?;
    let sums = stream_weighted_sums(family, seed, 2, k_grid, n_paths, |_| 1.0)?;
    let rows = k_grid
        .iter()
        .zip(&sums)
        .map(|(&k, v)| {
            let lk = (k as f64).ln();
            let scaled: Vec<f64> = v.iter().map(|x| x / lk).collect();
            let (_, quantiles, _) = summarize(&scaled, 1.0);
            let median = quantiles[3];
            ClosednessRow {
                k,
                median,
                distance_to_one: (median - 1.0).abs(),
                quantiles,
                analytic_variance: (k - 1) as f64 / (lk * lk),
            }
        })
        .collect();
    Ok(ClosednessReport {
        n_paths,
        seed,
        rows,
        conclusion: "V(lambda(k)) tends to 1 almost surely while its variance explodes; the limit X = 1 satisfies \
                     E[X eps_i] = 0 for every i, so it is not the value of any admissible strategy"
            .into(),
    })
}

/// Unit-norm strategy rules `φ̃(n)` with `max_i |φ̃_i(n)| → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalizedRule {
    /// `φ̃_i(n) = 1/√n`.
    EqualWeights,
    /// `φ̃_i(n) ∝ i^{−a}` for `i ≤ n`, `0 ≤ a < 1/2`.
    PowerDecay { exponent: f64 },
}

impl NormalizedRule {
    fn validate(&self) -> Result<()> {
        if let NormalizedRule::PowerDecay { exponent } = self {
            if !(*exponent >= 0.0 && *exponent < 0.5) {
                return Err(invalid("power-decay rules need 0 ≤ exponent < 1/2 so that max |φ̃_i(n)| → 0"));
            }
        }
        Ok(())
    }

    fn raw_weight(&self, i: usize) -> f64 {
        match self {
            NormalizedRule::EqualWeights => 1.0,
            NormalizedRule::PowerDecay { exponent } => (i as f64).powf(-exponent),
        }
    }

    /// `(Σ_{i≤n} raw_i²)^{1/2}`.
    fn norm(&self, n: usize) -> f64 {
        match self {
            NormalizedRule::EqualWeights => (n as f64).sqrt(),
            _ => CompensatedSum::from_iter((1..=n).map(|i| self.raw_weight(i).powi(2))).value().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltRow {
    pub n: usize,
    /// `d_n = Σ φ̃_i(n) b_i`; the Gaussian limit is `N(−d, 1)`.
    pub d: f64,
    pub max_weight: f64,
    pub ks: f64,
    /// `1.36/√samples`, the 95% band of the KS statistic under the null.
    pub ks_band: f64,
    pub p_negative: f64,
    /// `Φ(d_n)`, the limiting `P(V < 0)`.
    pub f_gauss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub family: String,
    pub rule: NormalizedRule,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<CltRow>,
}

/// Kolmogorov–Smirnov distance between a sample and `N(mean, 1)`.
pub fn ks_to_normal(values: &[f64], mean: f64) -> f64 {
    let normal = Normal::new(mean, 1.0).expect("unit variance normal");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let f = normal.cdf(x);
            ((j + 1) as f64 / n - f).max(f - j as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Empirical law of `V(φ̃(n))` against its Gaussian limit for each `n`.
pub fn clt_normalized_check<T: Scalar>(
    rule: NormalizedRule,
    b: &ReducedParams<T>,
    family: &ShockFamily,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<CltReport> {
    rule.validate()?;
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_grid must be strictly ascending with n ≥ 1"));
    }
    if b.knowledge() == TailKnowledge::Known && !b.sequence().sum_sq().is_summable() {
        return Err(invalid(
            "Σ b_i² diverges, so Σ φ̃_i(n) b_i has no finite limit d; no Gaussian limit to compare against",
        ));
    }
    let last = *n_grid.last().unwrap();
    b.sharpe_sum(last)?;
    let sums = stream_weighted_sums(family, seed, 1, n_grid, samples, |i| rule.raw_weight(i))?;
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::with_capacity(n_grid.len());
    for (&n, s) in n_grid.iter().zip(&sums) {
        let norm = rule.norm(n);
        let unit = CompensatedSum::from_iter((1..=n).map(|i| (rule.raw_weight(i) / norm).powi(2))).value();
        if (unit - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("normalized rule has squared norm {unit} at n = {n}")));
        }
        let d = CompensatedSum::from_iter((1..=n).map(|i| rule.raw_weight(i) / norm * b.get(i).to_f64_lossy())).value();
        let values: Vec<f64> = s.iter().map(|x| x / norm - d).collect();
        let p_negative = values.iter().filter(|&&v| v < 0.0).count() as f64 / samples as f64;
        rows.push(CltRow {
            n,
            d,
            max_weight: (1..=n).map(|i| rule.raw_weight(i)).fold(0.0, f64::max) / norm,
            ks: ks_to_normal(&values, -d),
            ks_band: 1.36 / (samples as f64).sqrt(),
            p_negative,
            f_gauss: std_normal.cdf(d),
        });
    }
    Ok(CltReport { family: family.label(), rule, samples, seed, rows })
}
