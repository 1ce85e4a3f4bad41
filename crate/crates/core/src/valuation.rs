//! Portfolio values `V(φ) = Σ φ_i (ε_i − b_i)` on frozen sample pools,
//! analytic moments, and expectations under reweighted measures.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, ApmError, Result};
use crate::market::{ReducedParams, Strategy, TailKnowledge};
use crate::scalar::{CompensatedSum, MeanEstimate, MomentAccumulator, Scalar};
use crate::sequence::Summability;
use crate::shocks::{fill_column, ShockFamily};

/// Rows per block in block-parallel reductions. Fixed, so results never
/// depend on the number of worker threads.
pub const ROW_BLOCK: usize = 4096;

/// Immutable `n × k` pool of shock draws for indices `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool<T> {
    family: ShockFamily,
    seed: u64,
    n: usize,
    antithetic: bool,
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> SamplePool<T> {
    pub fn build(family: &ShockFamily, k: usize, n: usize, seed: u64) -> Result<Self> {
        Self::build_inner(family, k, n, seed, false)
    }

    /// Pool whose second half negates the first half row by row. Only for
    /// Gaussian shocks, where the mirrored rows have the same law.
    pub fn build_antithetic(family: &ShockFamily, k: usize, n: usize, seed: u64) -> Result<Self> {
        if *family != ShockFamily::Gaussian {
            return Err(invalid("antithetic pairing is only supported for Gaussian shocks"));
        }
        if n % 2 != 0 {
            return Err(invalid("antithetic pools need an even sample count"));
        }
        Self::build_inner(family, k, n, seed, true)
    }

    fn build_inner(family: &ShockFamily, k: usize, n: usize, seed: u64, antithetic: bool) -> Result<Self> {
        family.validate()?;
        if n == 0 || k == 0 {
            return Err(invalid("sample pools need n ≥ 1 and k ≥ 1"));
        }
        let base = if antithetic { n / 2 } else { n };
        let columns = (1..=k)
            .into_par_iter()
            .map(|i| {
                let mut raw = vec![0.0f64; base];
                fill_column(family, i, seed, 0, &mut raw);
                let mut col: Vec<T> = raw.iter().map(|&x| T::lit(x)).collect();
                if antithetic {
                    col.extend(raw.iter().map(|&x| T::lit(-x)));
                }
                col
            })
            .collect();
        Ok(Self { family: family.clone(), seed, n, antithetic, columns })
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> usize {
        self.columns.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn family(&self) -> &ShockFamily {
        &self.family
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    /// Draws of `ε_i`, `1 ≤ i ≤ k`.
    pub fn column(&self, i: usize) -> &[T] {
        &self.columns[i - 1]
    }

    pub fn descriptor(&self) -> PoolDescriptor {
        PoolDescriptor {
            family: self.family.label(),
            seed: self.seed,
            samples: self.n,
            first_index: 1,
            last_index: self.indices(),
            antithetic: self.antithetic,
        }
    }

    /// CSV export: `#`-prefixed header lines, then one row per sample with a
    /// column per index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.descriptor();
        writeln!(out, "# seed={}", d.seed)?;
        writeln!(out, "# family={}", d.family)?;
        writeln!(out, "# indices={}..={}", d.first_index, d.last_index)?;
        writeln!(out, "# antithetic={}", d.antithetic)?;
        let header: Vec<String> = (1..=self.indices()).map(|i| format!("eps_{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for j in 0..self.n {
            line.clear();
            for (c, col) in self.columns.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:e}", col[j].to_f64_lossy()));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Flat binary export: magic `APMPOOL1`, a little-endian `u32` header
    /// length, a JSON header, then column-major little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.descriptor()).expect("descriptor serializes");
        out.write_all(b"APMPOOL1")?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        for col in &self.columns {
            for &x in col {
                out.write_all(&x.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolDescriptor {
    pub family: String,
    pub seed: u64,
    pub samples: usize,
    pub first_index: usize,
    pub last_index: usize,
    pub antithetic: bool,
}

/// Analytic truncation error of evaluating an infinite-support strategy on
/// the first `n` indices only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound<T> {
    pub truncated_at: usize,
    /// `Σ_{i>n} φ_i²`, the variance of the omitted part.
    pub tail_variance: T,
    /// `|Σ_{i>n} φ_i b_i| ≤ √(Σ_{i>n} φ_i²) · √(Σ_{i>n} b_i²)`.
    pub mean_bound: T,
    /// Exact omitted mean `−Σ_{i>n} φ_i b_i`, when closed form.
    pub tail_mean: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSamples<T> {
    pub values: Vec<T>,
    pub tail: Option<TailBound<T>>,
}

/// Truncation bound for the indices past `n`.
pub fn tail_bound<T: Scalar>(phi: &Strategy<T>, b: &ReducedParams<T>, n: usize) -> Result<TailBound<T>> {
    let tail_variance = phi
        .sequence()
        .sum_sq_from(n)
        .value()
        .ok_or_else(|| ApmError::DivergentTail("strategy tail".into()))?;
    if b.knowledge() == TailKnowledge::Unknown {
        return Err(ApmError::DivergentTail(
            "b is only known on a prefix; cannot bound the omitted mean".into(),
        ));
    }
    let b_tail = b
        .sequence()
        .sum_sq_from(n)
        .value()
        .ok_or_else(|| ApmError::DivergentTail("Σ b_i² diverges".into()))?;
    let tail_mean = phi.sequence().dot_from(b.sequence(), n).value().map(|x| -x);
    Ok(TailBound {
        truncated_at: n,
        tail_variance,
        mean_bound: tail_variance.sqrt() * b_tail.sqrt(),
        tail_mean,
    })
}

/// `V_j = Σ_i φ_i (ε_{j,i} − b_i)` for every pool row.
pub fn value_samples<T: Scalar>(
    phi: &Strategy<T>,
    b: &ReducedParams<T>,
    pool: &SamplePool<T>,
) -> Result<ValueSamples<T>> {
    let k = pool.indices();
    let (used, tail) = match phi.segment() {
        Some(s) if s <= k => (s, None),
        Some(s) => return Err(ApmError::SupportExceedsPool { support: s, pool: k }),
        None => (k, Some(tail_bound(phi, b, k)?)),
    };
    let coeffs = phi.values(used);
    let bs = b.values(used);
    Ok(ValueSamples { values: values_dense(&coeffs, &bs, pool), tail })
}

/// Dense-coefficient kernel shared with the optimizer: coefficient `l`
/// multiplies column `l + 1`.
pub fn values_dense<T: Scalar>(coeffs: &[T], b: &[T], pool: &SamplePool<T>) -> Vec<T> {
    values_dense_from(coeffs, b, pool, 1)
}

/// As [`values_dense`], with coefficient `l` multiplying column `first + l`.
pub fn values_dense_from<T: Scalar>(coeffs: &[T], b: &[T], pool: &SamplePool<T>, first: usize) -> Vec<T> {
    let n = pool.samples();
    let mut out = vec![T::zero(); n];
    out.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(blk, chunk)| {
        let start = blk * ROW_BLOCK;
        let mut acc = vec![CompensatedSum::<T>::new(); chunk.len()];
        for (l, (&c, &bl)) in coeffs.iter().zip(b).enumerate() {
            if c == T::zero() {
                continue;
            }
            let col = &pool.column(first + l)[start..start + chunk.len()];
            for (a, &x) in acc.iter_mut().zip(col) {
                a.add(c * (x - bl));
            }
        }
        for (slot, a) in chunk.iter_mut().zip(&acc) {
            *slot = a.value();
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueMoments<T> {
    pub mean: T,
    pub variance: T,
}

/// Analytic moments: `E V = −Σ φ_i b_i`, `var V = Σ φ_i²`.
pub fn value_moments<T: Scalar>(phi: &Strategy<T>, b: &ReducedParams<T>) -> Result<ValueMoments<T>> {
    if b.knowledge() == TailKnowledge::Unknown {
        let needed = phi.segment().unwrap_or(usize::MAX);
        if needed > b.sequence().prefix_len() {
            return Err(ApmError::MissingCoefficient { name: "b", index: b.sequence().prefix_len() + 1 });
        }
    }
    let inner = match phi.sequence().dot(b.sequence()) {
        Summability::Summable(v) => v,
        Summability::Divergent => return Err(ApmError::DivergentTail("Σ φ_i b_i".into())),
    };
    Ok(ValueMoments { mean: -inner, variance: phi.norm_sq() })
}

/// `Σ_j w_j V_j / n` with its standard error; refuses weights whose mean
/// is not 1 within `1e−8`.
pub fn expectation_under_density<T: Scalar>(values: &[T], weights: &[T]) -> Result<MeanEstimate> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(invalid("values and weights must be nonempty and aligned"));
    }
    let wmean: MomentAccumulator = weights.iter().map(|w| w.to_f64_lossy()).collect();
    if weights.iter().any(|&w| w < T::zero() || !w.is_finite()) {
        return Err(ApmError::InvalidDensity("negative or non-finite weight".into()));
    }
    if (wmean.mean() - 1.0).abs() > 1e-8 {
        return Err(ApmError::UnnormalizedDensity { mean: wmean.mean() });
    }
    let acc: MomentAccumulator = values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| (v * w).to_f64_lossy())
        .collect();
    Ok(acc.estimate())
}
