//! Laws of the independent standardized shocks `ε_i`, their counter-based
//! samplers, analytic tails, and the tail/uniform-integrability diagnostics.
//!
//! Draw `j` of index `i` is a pure function of `(seed, i, j)`: each index owns
//! a ChaCha8 stream (`stream = i`) and draw `j` reads a fixed number of words
//! starting at word position `j · words_per_draw`. A column is therefore the
//! same no matter which other indices are requested or how the rows are
//! split into blocks.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{invalid, ApmError, Result};

/// Standardized law of a single `ε_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShockLaw {
    Gaussian,
    /// Student-t with `df > 2`, scaled to unit variance.
    StudentT { df: f64 },
    /// Two-point law of the free-lunch counterexample at index `n ≥ 2`.
    AbaTwoPoint { n: usize },
    /// `±1` with probability 1/2 each.
    Rademacher,
    /// Symmetric Lomax (Pareto II) magnitude with tail exponent `theta > 2`,
    /// scaled to unit variance: `P(ε > z) = ½ (1 + z/σ)^(−θ)`.
    PowerTail { theta: f64 },
}

/// Two-point law `(value_up, value_down, p_up, p_down)` at index `n ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPoint {
    pub value_up: f64,
    pub value_down: f64,
    pub p_up: f64,
    pub p_down: f64,
}

pub fn aba_two_point(n: usize) -> Result<TwoPoint> {
    if n < 2 {
        return Err(invalid(format!("two-point law needs index ≥ 2, got {n}")));
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv3 = inv * inv * inv;
    let root = (1.0 + inv * inv - inv3 * inv - inv3 * inv3).sqrt();
    Ok(TwoPoint {
        value_up: (inv + inv3) / root,
        value_down: (-x + inv3) / root,
        p_up: 1.0 - inv * inv,
        p_down: inv * inv,
    })
}

#[inline]
fn unit_open_closed(w: u64) -> f64 {
    // (0, 1]
    ((w >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

#[inline]
fn unit_closed_open(w: u64) -> f64 {
    // [0, 1)
    (w >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("df > 0")
}

impl ShockLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ShockLaw::StudentT { df } if !(df > 2.0) => Err(ApmError::UnsupportedShock(format!(
                "standardized Student-t needs df > 2 (finite variance), got {df}"
            ))),
            ShockLaw::PowerTail { theta } if !(theta > 2.0) => Err(ApmError::UnsupportedShock(format!(
                "power tail needs theta > 2, got {theta}"
            ))),
            ShockLaw::AbaTwoPoint { n } if n < 2 => Err(invalid("two-point law needs index ≥ 2")),
            _ => Ok(()),
        }
    }

    /// Lomax scale giving unit variance.
    fn lomax_scale(theta: f64) -> f64 {
        ((theta - 1.0) * (theta - 2.0) / 2.0).sqrt()
    }

    pub fn words_per_draw(&self) -> usize {
        match self {
            ShockLaw::AbaTwoPoint { .. } | ShockLaw::Rademacher => 1,
            _ => 2,
        }
    }

    /// Maps `words_per_draw` uniform words to one draw.
    #[inline]
    pub fn transform(&self, words: &[u64]) -> f64 {
        match *self {
            ShockLaw::Gaussian => {
                let r = (-2.0 * unit_open_closed(words[0]).ln()).sqrt();
                r * (2.0 * PI * unit_closed_open(words[1])).cos()
            }
            ShockLaw::StudentT { df } => {
                // Bailey's polar construction with the disc point written in
                // polar coordinates, so no rejection step is needed.
                let w = unit_open_closed(words[0]);
                let c = (2.0 * PI * unit_closed_open(words[1])).cos();
                let t = c * (df * (w.powf(-2.0 / df) - 1.0)).sqrt();
                t * ((df - 2.0) / df).sqrt()
            }
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                if unit_closed_open(words[0]) < tp.p_down {
                    tp.value_down
                } else {
                    tp.value_up
                }
            }
            ShockLaw::Rademacher => {
                if words[0] >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ShockLaw::PowerTail { theta } => {
                let sigma = Self::lomax_scale(theta);
                let y = sigma * (unit_open_closed(words[0]).powf(-1.0 / theta) - 1.0);
                if words[1] >> 63 == 0 {
                    y
                } else {
                    -y
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                tp.p_up * tp.value_up + tp.p_down * tp.value_down
            }
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ShockLaw::Gaussian | ShockLaw::Rademacher => 1.0,
            ShockLaw::StudentT { df } => (df / (df - 2.0)) * ((df - 2.0) / df),
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                let m = self.mean();
                tp.p_up * tp.value_up.powi(2) + tp.p_down * tp.value_down.powi(2) - m * m
            }
            ShockLaw::PowerTail { theta } => {
                let s = Self::lomax_scale(theta);
                2.0 * s * s / ((theta - 1.0) * (theta - 2.0))
            }
        }
    }

    /// `P(ε > x)`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        match *self {
            ShockLaw::Gaussian => std_normal_sf(x),
            ShockLaw::StudentT { df } => student(df).sf(x * (df / (df - 2.0)).sqrt()),
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                let mut p = 0.0;
                if tp.value_up > x {
                    p += tp.p_up;
                }
                if tp.value_down > x {
                    p += tp.p_down;
                }
                p
            }
            ShockLaw::Rademacher => {
                if x < -1.0 {
                    1.0
                } else if x < 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            ShockLaw::PowerTail { theta } => {
                if x < 0.0 {
                    1.0 - self.upper_tail(-x)
                } else {
                    0.5 * (1.0 + x / Self::lomax_scale(theta)).powf(-theta)
                }
            }
        }
    }

    /// `P(ε < −x)`.
    pub fn lower_tail(&self, x: f64) -> f64 {
        match *self {
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                let mut p = 0.0;
                if tp.value_up < -x {
                    p += tp.p_up;
                }
                if tp.value_down < -x {
                    p += tp.p_down;
                }
                p
            }
            // remaining laws are symmetric and continuous or ±1
            ShockLaw::Rademacher => {
                if x < -1.0 {
                    1.0
                } else if x < 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            _ => self.upper_tail(x),
        }
    }

    /// `E[ε² 1{|ε| ≥ N}]`.
    pub fn truncated_second_moment(&self, big_n: f64) -> f64 {
        let big_n = big_n.max(0.0);
        match *self {
            ShockLaw::Gaussian => 2.0 * (big_n * std_normal_pdf(big_n) + std_normal_sf(big_n)),
            ShockLaw::StudentT { df } => {
                // Integrate t² f_ν(t) by writing t²(1 + t²/ν)^(−(ν+1)/2) as a
                // difference of two t-kernels (ν−2 and ν degrees of freedom).
                let scale = (df / (df - 2.0)).sqrt();
                let a = big_n * scale;
                let k = df * (df - 1.0) / (df - 2.0);
                let lower = student(df - 2.0).sf(a / scale);
                let upper = student(df).sf(a);
                let raw = 2.0 * (k * lower - df * upper);
                (raw / (scale * scale)).max(0.0)
            }
            ShockLaw::AbaTwoPoint { n } => {
                let tp = aba_two_point(n).expect("validated index");
                let mut m = 0.0;
                if tp.value_up.abs() >= big_n {
                    m += tp.p_up * tp.value_up.powi(2);
                }
                if tp.value_down.abs() >= big_n {
                    m += tp.p_down * tp.value_down.powi(2);
                }
                m
            }
            ShockLaw::Rademacher => {
                if big_n <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ShockLaw::PowerTail { theta } => {
                let s = Self::lomax_scale(theta);
                let t = 1.0 + big_n / s;
                big_n * big_n * t.powf(-theta)
                    + 2.0 * s * s * (t.powf(2.0 - theta) / (theta - 2.0) - t.powf(1.0 - theta) / (theta - 1.0))
            }
        }
    }

    /// Constants `(c, C)` with `c z^(−θ) ≤ P(ε ≥ z), P(ε ≤ −z) ≤ C z^(−θ)` for
    /// `z ≥ 1`; only the power-tail law has them.
    pub fn power_bracket(&self) -> Option<(f64, f64, f64)> {
        match *self {
            ShockLaw::PowerTail { theta } => {
                let s = Self::lomax_scale(theta);
                let upper = 0.5 * s.powf(theta);
                let lower = 0.5 * (s / (s + 1.0)).powf(theta);
                Some((lower, upper, theta))
            }
            _ => None,
        }
    }

    /// Support unbounded in both directions.
    pub fn unbounded_support(&self) -> bool {
        matches!(self, ShockLaw::Gaussian | ShockLaw::StudentT { .. } | ShockLaw::PowerTail { .. })
    }
}

/// Per-index assignment of shock laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShockFamily {
    Gaussian,
    #[serde(rename = "standardized_student_t", alias = "student_t")]
    StudentT { df: f64 },
    /// Index-dependent two-point laws for `i ≥ 2`; `ε_1` is Gaussian.
    TwoPointAba,
    Rademacher,
    #[serde(rename = "bounded_tail_power", alias = "power_tail")]
    PowerTail { theta: f64 },
    /// Index `i` uses `members[(i − 1) mod len]`.
    Cycle { members: Vec<ShockFamily> },
}

impl ShockFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShockFamily::StudentT { df } => ShockLaw::StudentT { df: *df }.validate(),
            ShockFamily::PowerTail { theta } => ShockLaw::PowerTail { theta: *theta }.validate(),
            ShockFamily::Cycle { members } => {
                if members.is_empty() {
                    return Err(ApmError::UnsupportedShock("cycle family without members".into()));
                }
                members.iter().try_for_each(ShockFamily::validate)
            }
            _ => Ok(()),
        }
    }

    /// Law of `ε_i`, `i ≥ 1`.
    pub fn law(&self, i: usize) -> ShockLaw {
        debug_assert!(i >= 1);
        match self {
            ShockFamily::Gaussian => ShockLaw::Gaussian,
            ShockFamily::StudentT { df } => ShockLaw::StudentT { df: *df },
            ShockFamily::TwoPointAba => {
                if i >= 2 {
                    ShockLaw::AbaTwoPoint { n: i }
                } else {
                    ShockLaw::Gaussian
                }
            }
            ShockFamily::Rademacher => ShockLaw::Rademacher,
            ShockFamily::PowerTail { theta } => ShockLaw::PowerTail { theta: *theta },
            ShockFamily::Cycle { members } => members[(i - 1) % members.len()].law(i),
        }
    }

    /// Finitely many distinct laws across all indices.
    pub fn finitely_many_laws(&self) -> bool {
        match self {
            ShockFamily::TwoPointAba => false,
            ShockFamily::Cycle { members } => members.iter().all(ShockFamily::finitely_many_laws),
            _ => true,
        }
    }

    /// Distinct laws among indices `1..=i_max` (all of them when the family
    /// is index dependent).
    fn laws_up_to(&self, i_max: usize) -> Vec<ShockLaw> {
        if self.finitely_many_laws() {
            let period = self.period();
            (1..=period.min(i_max).max(1)).map(|i| self.law(i)).collect()
        } else {
            (1..=i_max).map(|i| self.law(i)).collect()
        }
    }

    fn period(&self) -> usize {
        match self {
            ShockFamily::Cycle { members } => {
                let inner = members.iter().map(ShockFamily::period).fold(1, lcm);
                lcm(inner, members.len())
            }
            _ => 1,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            ShockFamily::TwoPointAba => false,
            ShockFamily::Cycle { members } => members.iter().all(ShockFamily::is_symmetric),
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ShockFamily::Gaussian => "gaussian".into(),
            ShockFamily::StudentT { df } => format!("standardized_student_t(df={df})"),
            ShockFamily::TwoPointAba => "two_point_aba".into(),
            ShockFamily::Rademacher => "rademacher".into(),
            ShockFamily::PowerTail { theta } => format!("bounded_tail_power(theta={theta})"),
            ShockFamily::Cycle { members } => {
                let inner: Vec<String> = members.iter().map(ShockFamily::label).collect();
                format!("cycle[{}]", inner.join(","))
            }
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Fills `out` with draws `start, start+1, …` of index `i`.
pub fn fill_column(family: &ShockFamily, index: usize, seed: u64, start: usize, out: &mut [f64]) {
    let law = family.law(index);
    let words = law.words_per_draw();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    // word positions count 32-bit words
    rng.set_word_pos((start as u128) * (words as u128) * 2);
    if let ShockLaw::AbaTwoPoint { n } = law {
        // Same mapping as `transform`, with the law's constants hoisted.
        let tp = aba_two_point(n).expect("validated index");
        for slot in out.iter_mut() {
            *slot = if unit_closed_open(rng.next_u64()) < tp.p_down { tp.value_down } else { tp.value_up };
        }
        return;
    }
    let mut buf = [0u64; 2];
    for slot in out.iter_mut() {
        for w in buf.iter_mut().take(words) {
            *w = rng.next_u64();
        }
        *slot = law.transform(&buf[..words]);
    }
}

/// Column-major `n × |indices|` matrix of shock draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockMatrix {
    pub n: usize,
    pub first_index: usize,
    pub columns: Vec<Vec<f64>>,
}

impl ShockMatrix {
    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i - self.first_index]
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// Draws `n` samples of every index in `first..=last`.
pub fn sample(family: &ShockFamily, first: usize, last: usize, n: usize, seed: u64) -> Result<ShockMatrix> {
    family.validate()?;
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if first == 0 || last < first {
        return Err(invalid("index range must be a nonempty range of indices ≥ 1"));
    }
    let columns = (first..=last)
        .into_par_iter()
        .map(|i| {
            let mut col = vec![0.0; n];
            fill_column(family, i, seed, 0, &mut col);
            col
        })
        .collect();
    Ok(ShockMatrix { n, first_index: first, columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceVerdict {
    Pass,
    /// Finite-grid checks pass but the family has no analytic uniform bound.
    InconclusiveFiniteHorizon,
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub x: f64,
    pub inf_upper: f64,
    pub inf_lower: f64,
    /// `(h(x), C x^(−θ))` when the family carries a power bracket and `x ≥ 1`.
    pub bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityRow {
    pub level: f64,
    pub sup_truncated_second_moment: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelevanceReport {
    pub family: String,
    pub i_max: usize,
    pub tails: Vec<TailRow>,
    pub integrability: Vec<IntegrabilityRow>,
    pub verdict: RelevanceVerdict,
    pub reasons: Vec<String>,
}

/// Largest truncated second moment allowed at the top of the level grid
/// before the uniform-integrability check is declared failed.
pub const UI_TOLERANCE: f64 = 0.05;

/// Tail and uniform-integrability diagnostics over indices `1..=i_max`.
pub fn check_assumption_relevant(
    family: &ShockFamily,
    x_grid: &[f64],
    level_grid: &[f64],
    i_max: usize,
) -> Result<RelevanceReport> {
    family.validate()?;
    if x_grid.is_empty() || level_grid.is_empty() || i_max == 0 {
        return Err(invalid("relevance check needs nonempty grids and i_max ≥ 1"));
    }
    let laws = family.laws_up_to(i_max);
    let mut reasons = Vec::new();

    let tails: Vec<TailRow> = x_grid
        .iter()
        .map(|&x| {
            let inf_upper = laws.iter().map(|l| l.upper_tail(x)).fold(f64::INFINITY, f64::min);
            let inf_lower = laws.iter().map(|l| l.lower_tail(x)).fold(f64::INFINITY, f64::min);
            let bracket = if x >= 1.0 {
                laws.iter()
                    .filter_map(|l| l.power_bracket())
                    .map(|(c, cc, th)| (c * x.powf(-th), cc * x.powf(-th)))
                    .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
            } else {
                None
            };
            TailRow { x, inf_upper, inf_lower, bracket }
        })
        .collect();

    for row in &tails {
        if row.inf_upper <= 0.0 {
            reasons.push(format!("upper tail vanishes at x = {}", row.x));
        }
        if row.inf_lower <= 0.0 {
            reasons.push(format!("lower tail vanishes at x = {}", row.x));
        }
    }

    let mut levels: Vec<f64> = level_grid.to_vec();
    levels.sort_by(f64::total_cmp);
    let integrability: Vec<IntegrabilityRow> = levels
        .iter()
        .map(|&level| IntegrabilityRow {
            level,
            sup_truncated_second_moment: laws
                .iter()
                .map(|l| l.truncated_second_moment(level))
                .fold(0.0, f64::max),
        })
        .collect();
    let increasing = integrability
        .windows(2)
        .any(|w| w[1].sup_truncated_second_moment > w[0].sup_truncated_second_moment + 1e-12);
    let last = integrability.last().map_or(0.0, |r| r.sup_truncated_second_moment);
    if increasing || last > UI_TOLERANCE {
        reasons.push(format!(
            "truncated second moments do not decrease toward 0 (sup = {last:.6} at N = {})",
            integrability.last().map_or(0.0, |r| r.level)
        ));
    }

    let verdict = if !reasons.is_empty() {
        RelevanceVerdict::Violated
    } else if !family.finitely_many_laws() {
        reasons.push("index-dependent laws: evidence covers only i ≤ i_max".into());
        RelevanceVerdict::InconclusiveFiniteHorizon
    } else {
        RelevanceVerdict::Pass
    };

    Ok(RelevanceReport { family: family.label(), i_max, tails, integrability, verdict, reasons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_laws() -> Vec<ShockLaw> {
        vec![
            ShockLaw::Gaussian,
            ShockLaw::StudentT { df: 3.5 },
            ShockLaw::StudentT { df: 8.0 },
            ShockLaw::AbaTwoPoint { n: 2 },
            ShockLaw::AbaTwoPoint { n: 17 },
            ShockLaw::AbaTwoPoint { n: 1000 },
            ShockLaw::Rademacher,
            ShockLaw::PowerTail { theta: 3.0 },
            ShockLaw::PowerTail { theta: 6.5 },
        ]
    }

    #[test]
    fn aba_law_at_two() {
        let tp = aba_two_point(2).unwrap();
        assert_relative_eq!(tp.value_up, 0.577350, epsilon = 1e-6);
        assert_relative_eq!(tp.value_down, -1.732051, epsilon = 1e-6);
        assert_eq!((tp.p_up, tp.p_down), (0.75, 0.25));
        assert!(aba_two_point(1).is_err());
    }

    #[test]
    fn aba_law_is_standardized_everywhere() {
        for n in [2usize, 3, 10, 123, 10_000, 1_000_000] {
            let tp = aba_two_point(n).unwrap();
            assert_eq!(tp.p_up + tp.p_down, 1.0);
            let mean = tp.p_up * tp.value_up + tp.p_down * tp.value_down;
            let second = tp.p_up * tp.value_up.powi(2) + tp.p_down * tp.value_down.powi(2);
            assert!(mean.abs() < 1e-12, "n={n} mean={mean}");
            assert!((second - 1.0).abs() < 1e-12, "n={n} second={second}");
        }
    }

    #[test]
    fn analytic_moments_are_standard() {
        for law in all_laws() {
            assert!(law.mean().abs() < 1e-10, "{law:?}");
            assert!((law.variance() - 1.0).abs() < 1e-10, "{law:?}");
            // truncated second moment at N = 0 is the full variance
            assert!((law.truncated_second_moment(0.0) - 1.0).abs() < 1e-10, "{law:?}");
        }
    }

    /// Midpoint-rule oracle for `E[ε² 1{|ε| ≥ N}]` of symmetric continuous laws.
    fn quadrature_truncated(law: ShockLaw, big_n: f64) -> f64 {
        let density = |x: f64| -> f64 {
            let h = 1e-5;
            (law.upper_tail(x - h) - law.upper_tail(x + h)) / (2.0 * h)
        };
        // substitute x = N + t/(1−t) on [0, 1)
        let m = 400_000;
        let mut acc = 0.0;
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64;
            let x = big_n + t / (1.0 - t);
            let jac = 1.0 / (1.0 - t).powi(2);
            acc += x * x * density(x) * jac;
        }
        2.0 * acc / m as f64
    }

    #[test]
    fn truncated_moments_match_quadrature() {
        for law in [ShockLaw::StudentT { df: 5.0 }, ShockLaw::PowerTail { theta: 4.0 }, ShockLaw::Gaussian] {
            for n in [0.5, 2.0, 6.0] {
                let q = quadrature_truncated(law, n);
                let a = law.truncated_second_moment(n);
                assert!((q - a).abs() < 2e-5 * (1.0 + a), "{law:?} N={n}: quad {q} vs {a}");
            }
        }
    }

    #[test]
    fn gaussian_tail_at_one() {
        let r = check_assumption_relevant(&ShockFamily::Gaussian, &[1.0], &[1.0, 3.0, 8.0], 50).unwrap();
        assert_relative_eq!(r.tails[0].inf_upper, 0.158655, epsilon = 1e-6);
        assert_relative_eq!(r.tails[0].inf_lower, 0.158655, epsilon = 1e-6);
        assert_eq!(r.verdict, RelevanceVerdict::Pass);
    }

    #[test]
    fn aba_family_is_violated() {
        let r = check_assumption_relevant(&ShockFamily::TwoPointAba, &[0.5, 1.0], &[1.0, 10.0], 200).unwrap();
        assert_eq!(r.tails[1].inf_upper, 0.0);
        assert_eq!(r.verdict, RelevanceVerdict::Violated);
    }

    #[test]
    fn power_tail_bracket_holds() {
        let fam = ShockFamily::PowerTail { theta: 3.5 };
        let xs = [1.0, 2.0, 5.0, 40.0, 1e3];
        let r = check_assumption_relevant(&fam, &xs, &[1.0, 100.0], 10).unwrap();
        for row in &r.tails {
            let (h, c) = row.bracket.unwrap();
            assert!(h <= row.inf_upper && row.inf_upper <= c, "{row:?}");
            assert!(h <= row.inf_lower && row.inf_lower <= c, "{row:?}");
        }
    }

    #[test]
    fn rademacher_violates_tail_condition() {
        let r = check_assumption_relevant(&ShockFamily::Rademacher, &[0.5, 1.5], &[2.0], 3).unwrap();
        assert_eq!(r.verdict, RelevanceVerdict::Violated);
    }

    #[test]
    fn student_t_df_two_rejected() {
        assert!(ShockFamily::StudentT { df: 2.0 }.validate().is_err());
        assert!(sample(&ShockFamily::StudentT { df: 1.5 }, 1, 2, 10, 0).is_err());
    }

    #[test]
    fn hoisted_aba_column_matches_transform() {
        for i in [2usize, 3, 50, 4096] {
            let law = ShockFamily::TwoPointAba.law(i);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            rng.set_stream(i as u64);
            let expect: Vec<f64> = (0..500).map(|_| law.transform(&[rng.next_u64()])).collect();
            let mut got = vec![0.0; 500];
            fill_column(&ShockFamily::TwoPointAba, i, 8, 0, &mut got);
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn columns_do_not_depend_on_requested_range() {
        let fam = ShockFamily::Cycle {
            members: vec![ShockFamily::Gaussian, ShockFamily::StudentT { df: 5.0 }, ShockFamily::PowerTail { theta: 4.0 }],
        };
        let wide = sample(&fam, 1, 8, 500, 42).unwrap();
        let narrow = sample(&fam, 5, 5, 500, 42).unwrap();
        assert_eq!(wide.column(5), narrow.column(5));
        let mut block = vec![0.0; 100];
        fill_column(&fam, 5, 42, 250, &mut block);
        assert_eq!(&wide.column(5)[250..350], &block[..]);
        assert_ne!(wide.column(4), wide.column(7));
    }

    #[test]
    fn gaussian_law_of_large_numbers() {
        let n = 1_000_000;
        let m = sample(&ShockFamily::Gaussian, 3, 3, n, 11).unwrap();
        let col = m.column(3);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() <= 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn aba_column_support_and_frequencies() {
        let n = 200_000;
        let m = sample(&ShockFamily::TwoPointAba, 2, 2, n, 5).unwrap();
        let col = m.column(2);
        let down = col.iter().filter(|&&x| (x + 1.732051).abs() < 1e-6).count();
        let up = col.iter().filter(|&&x| (x - 0.577350).abs() < 1e-6).count();
        assert_eq!(up + down, n);
        let p = down as f64 / n as f64;
        assert!((p - 0.25).abs() <= 4.0 * (0.25 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn empirical_tails_match_analytic() {
        let n = 100_000;
        let fams = [
            ShockFamily::Gaussian,
            ShockFamily::StudentT { df: 4.0 },
            ShockFamily::PowerTail { theta: 3.0 },
            ShockFamily::Rademacher,
        ];
        for fam in fams {
            let m = sample(&fam, 1, 1, n, 99).unwrap();
            let col = m.column(1);
            let law = fam.law(1);
            for x in [-1.0, 0.0, 0.5, 1.0, 2.0, 3.0] {
                let p = law.upper_tail(x);
                let emp = col.iter().filter(|&&v| v > x).count() as f64 / n as f64;
                let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
                assert!((emp - p).abs() <= band, "{fam:?} x={x}: emp {emp} vs {p}");
            }
        }
    }

    #[test]
    fn sampler_is_bit_reproducible() {
        let a = sample(&ShockFamily::StudentT { df: 3.0 }, 1, 4, 1000, 7).unwrap();
        let b = sample(&ShockFamily::StudentT { df: 3.0 }, 1, 4, 1000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample(&ShockFamily::StudentT { df: 3.0 }, 1, 4, 1000, 8).unwrap();
        assert_ne!(a, c);
    }
}
