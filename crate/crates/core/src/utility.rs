//! Utility functions, loss-side domination constants, and the conjugate
//! (Young function) machinery used to judge whether a utility is moderate.
//!
//! Every [`UtilityFunction`] is shifted at construction so that `u(0) = 0`.
//! The unshifted formula stays available through
//! [`UtilityFunction::eval_unnormalized`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ApmError, Result};
use crate::scalar::Scalar;

/// Configuration-level description of a utility family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// `εx − 1` on losses, `−(1+x)^{−ε}` on gains.
    ProofU1 { epsilon: f64 },
    /// `κx + 1` on losses, `(1+x)^κ` on gains.
    ProofUn { kappa: f64 },
    /// `−λ|x|^p` on losses, flat on gains.
    PowerModerate { lambda: f64, p: f64 },
    /// `1 − e^{−a x}`.
    ExponentialBounded {
        #[serde(default = "one")]
        rate: f64,
    },
    /// `x − a x²` up to the vertex `1/(2a)`, constant beyond.
    QuadraticCapped { a: f64 },
    /// Piecewise linear through the origin. `slopes[j]` applies between
    /// `breakpoints[j−1]` and `breakpoints[j]`.
    Piecewise { breakpoints: Vec<f64>, slopes: Vec<f64> },
    /// `c x`. Accepted so that configurations can name it; the optimizer
    /// rejects it.
    Linear {
        #[serde(default = "one")]
        slope: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Claimed bound `u(x) ≤ C₁(x^α + 1)` for `x ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub c1: f64,
    pub alpha: f64,
}

/// How the gains side of `u` is controlled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthClass {
    BoundedAbove { sup: f64 },
    Certified(GrowthCertificate),
    Uncontrolled,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    ProofU1 { eps: f64 },
    ProofUn { kappa: f64 },
    Power { lambda: f64, p: f64 },
    Exponential { rate: f64 },
    Quadratic { a: f64 },
    Piecewise { breaks: Vec<f64>, slopes: Vec<f64>, anchors: Vec<f64> },
    Linear { slope: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFunction {
    spec: UtilitySpec,
    kind: Kind,
    scale: f64,
    offset: f64,
    certificate: Option<GrowthCertificate>,
}

pub fn make_proof_u1(epsilon: f64) -> Result<UtilityFunction> {
    UtilityFunction::new(UtilitySpec::ProofU1 { epsilon })
}

pub fn make_proof_un(kappa: f64) -> Result<UtilityFunction> {
    UtilityFunction::new(UtilitySpec::ProofUn { kappa })
}

impl UtilityFunction {
    pub fn new(spec: UtilitySpec) -> Result<Self> {
        let open_unit = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in (0,1), got {v}")))
            }
        };
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let (kind, certificate) = match &spec {
            UtilitySpec::ProofU1 { epsilon } => {
                open_unit(*epsilon, "epsilon")?;
                (Kind::ProofU1 { eps: *epsilon }, None)
            }
            UtilitySpec::ProofUn { kappa } => {
                open_unit(*kappa, "kappa")?;
                let cert = GrowthCertificate { c1: 2.0, alpha: *kappa };
                (Kind::ProofUn { kappa: *kappa }, Some(cert))
            }
            UtilitySpec::PowerModerate { lambda, p } => {
                positive(*lambda, "lambda")?;
                if !(*p > 1.0 && p.is_finite()) {
                    return Err(invalid(format!("power p must exceed 1, got {p}")));
                }
                (Kind::Power { lambda: *lambda, p: *p }, None)
            }
            UtilitySpec::ExponentialBounded { rate } => {
                positive(*rate, "rate")?;
                (Kind::Exponential { rate: *rate }, None)
            }
            UtilitySpec::QuadraticCapped { a } => {
                positive(*a, "a")?;
                (Kind::Quadratic { a: *a }, None)
            }
            UtilitySpec::Piecewise { breakpoints, slopes } => {
                (piecewise(breakpoints, slopes)?, None)
            }
            UtilitySpec::Linear { slope } => {
                positive(*slope, "slope")?;
                (Kind::Linear { slope: *slope }, None)
            }
        };
        let mut u = Self { spec, kind, scale: 1.0, offset: 0.0, certificate };
        u.offset = u.raw(0.0);
        Ok(u)
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    pub fn label(&self) -> String {
        match &self.spec {
            UtilitySpec::ProofU1 { epsilon } => format!("proof_u1(epsilon={epsilon})"),
            UtilitySpec::ProofUn { kappa } => format!("proof_un(kappa={kappa})"),
            UtilitySpec::PowerModerate { lambda, p } => format!("power_moderate(lambda={lambda},p={p})"),
            UtilitySpec::ExponentialBounded { rate } => format!("exponential_bounded(rate={rate})"),
            UtilitySpec::QuadraticCapped { a } => format!("quadratic_capped(a={a})"),
            UtilitySpec::Piecewise { .. } => "piecewise".into(),
            UtilitySpec::Linear { slope } => format!("linear(slope={slope})"),
        }
    }

    /// `λ·u` for `λ > 0`. Any additive constant is absorbed by the
    /// normalization, so this covers every positive affine transform.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("utility scale must be positive"));
        }
        let mut u = self.clone();
        u.scale *= lambda;
        u.certificate = u.certificate.map(|c| GrowthCertificate { c1: c.c1 * lambda, ..c });
        Ok(u)
    }

    /// Attaches a user-supplied growth certificate after checking it on a
    /// grid over `[0, 10⁶]`.
    pub fn with_certificate(&self, cert: GrowthCertificate) -> Result<Self> {
        if !(cert.alpha >= 0.0 && cert.alpha < 1.0 && cert.c1 > 0.0) {
            return Err(invalid("growth certificate needs c1 > 0 and 0 ≤ alpha < 1"));
        }
        let mut u = self.clone();
        u.certificate = Some(cert);
        if !u.check_certificate(10_000, 1e6) {
            return Err(invalid(format!(
                "growth certificate (c1={}, alpha={}) fails on the test grid",
                cert.c1, cert.alpha
            )));
        }
        Ok(u)
    }

    pub fn certificate(&self) -> Option<GrowthCertificate> {
        self.certificate
    }

    pub fn growth(&self) -> GrowthClass {
        if let Some(sup) = self.sup_value() {
            return GrowthClass::BoundedAbove { sup };
        }
        match self.certificate {
            Some(c) => GrowthClass::Certified(c),
            None => GrowthClass::Uncontrolled,
        }
    }

    /// Analytic `sup_x u(x)` when finite.
    pub fn sup_value(&self) -> Option<f64> {
        let raw_sup = match &self.kind {
            Kind::ProofU1 { .. } => 0.0,
            Kind::Power { .. } => 0.0,
            Kind::Exponential { .. } => 0.0,
            Kind::Quadratic { a } => 1.0 / (4.0 * a),
            Kind::Piecewise { slopes, anchors, .. } => {
                // slopes[0] > 0, so the first flat segment starts at a breakpoint.
                let flat = slopes.iter().position(|&s| s == 0.0)?;
                anchors[flat - 1]
            }
            Kind::ProofUn { .. } | Kind::Linear { .. } => return None,
        };
        Some(self.scale * (raw_sup - self.offset))
    }

    /// Analytic `sup_x u′(x)` when finite.
    pub fn sup_derivative(&self) -> Option<f64> {
        let raw = match &self.kind {
            Kind::ProofU1 { eps } => *eps,
            Kind::ProofUn { kappa } => *kappa,
            Kind::Piecewise { slopes, .. } => slopes[0],
            Kind::Linear { slope } => *slope,
            Kind::Power { .. } | Kind::Exponential { .. } | Kind::Quadratic { .. } => return None,
        };
        Some(self.scale * raw)
    }

    /// Whether `u′ > 0` everywhere.
    pub fn strictly_increasing(&self) -> bool {
        match &self.kind {
            Kind::ProofU1 { .. } | Kind::ProofUn { .. } | Kind::Exponential { .. } | Kind::Linear { .. } => true,
            Kind::Piecewise { slopes, .. } => *slopes.last().unwrap() > 0.0,
            Kind::Power { .. } | Kind::Quadratic { .. } => false,
        }
    }

    /// Whether `u` is strictly concave on the whole line.
    pub fn strictly_concave(&self) -> bool {
        matches!(self.kind, Kind::ProofU1 { .. } | Kind::ProofUn { .. } | Kind::Exponential { .. })
    }

    /// Points where `u′` may jump.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Piecewise { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }

    /// `u′(0)` used to normalize gradient tolerances.
    pub fn slope_at_zero(&self) -> f64 {
        self.deriv(0.0f64)
    }

    fn raw(&self, x: f64) -> f64 {
        self.raw_t(x)
    }

    fn raw_t<T: Scalar>(&self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match &self.kind {
            Kind::ProofU1 { eps } => {
                let e = T::lit(*eps);
                if x < zero {
                    e * x - one
                } else {
                    -(one + x).powf(-e)
                }
            }
            Kind::ProofUn { kappa } => {
                let k = T::lit(*kappa);
                if x < zero {
                    k * x + one
                } else {
                    (one + x).powf(k)
                }
            }
            Kind::Power { lambda, p } => {
                if x < zero {
                    -T::lit(*lambda) * (-x).powf(T::lit(*p))
                } else {
                    zero
                }
            }
            Kind::Exponential { rate } => -(-T::lit(*rate) * x).exp(),
            Kind::Quadratic { a } => {
                let a = T::lit(*a);
                let vertex = one / (a + a);
                let y = x.min(vertex);
                y - a * y * y
            }
            Kind::Piecewise { breaks, slopes, anchors } => {
                let j = breaks.partition_point(|&b| T::lit(b) <= x);
                // Segment j runs from breaks[j-1] to breaks[j].
                let (base_x, base_u) = if j == 0 {
                    match breaks.first() {
                        Some(&b0) => (T::lit(b0), T::lit(anchors[0])),
                        None => (zero, zero),
                    }
                } else {
                    (T::lit(breaks[j - 1]), T::lit(anchors[j - 1]))
                };
                base_u + T::lit(slopes[j]) * (x - base_x)
            }
            Kind::Linear { slope } => T::lit(*slope) * x,
        }
    }

    fn raw_deriv_sides<T: Scalar>(&self, x: T) -> (T, T) {
        let zero = T::zero();
        let one = T::one();
        match &self.kind {
            Kind::ProofU1 { eps } => {
                let e = T::lit(*eps);
                let d = if x < zero { e } else { e * (one + x).powf(-e - one) };
                (d, d)
            }
            Kind::ProofUn { kappa } => {
                let k = T::lit(*kappa);
                let d = if x < zero { k } else { k * (one + x).powf(k - one) };
                (d, d)
            }
            Kind::Power { lambda, p } => {
                let d = if x < zero {
                    T::lit(lambda * p) * (-x).powf(T::lit(p - 1.0))
                } else {
                    zero
                };
                (d, d)
            }
            Kind::Exponential { rate } => {
                let r = T::lit(*rate);
                let d = r * (-r * x).exp();
                (d, d)
            }
            Kind::Quadratic { a } => {
                let a = T::lit(*a);
                let d = (one - (a + a) * x).max(zero);
                (d, d)
            }
            Kind::Piecewise { breaks, slopes, .. } => {
                let right = breaks.partition_point(|&b| T::lit(b) <= x);
                let left = breaks.partition_point(|&b| T::lit(b) < x);
                (T::lit(slopes[left]), T::lit(slopes[right]))
            }
            Kind::Linear { slope } => (T::lit(*slope), T::lit(*slope)),
        }
    }

    /// Normalized value, `u(0) = 0`.
    #[inline]
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        T::lit(self.scale) * (self.raw_t(x) - T::lit(self.offset))
    }

    /// The family's formula before the normalizing shift.
    pub fn eval_unnormalized<T: Scalar>(&self, x: T) -> T {
        T::lit(self.scale) * self.raw_t(x)
    }

    /// `u′(x)`; at a kink the average of the one-sided slopes.
    #[inline]
    pub fn deriv<T: Scalar>(&self, x: T) -> T {
        let (l, r) = self.raw_deriv_sides(x);
        T::lit(self.scale) * (l + r) * T::lit(0.5)
    }

    pub fn left_deriv<T: Scalar>(&self, x: T) -> T {
        T::lit(self.scale) * self.raw_deriv_sides(x).0
    }

    pub fn right_deriv<T: Scalar>(&self, x: T) -> T {
        T::lit(self.scale) * self.raw_deriv_sides(x).1
    }

    /// `u(x) ≤ C₁(x^α + 1)` on `points` nodes of `[0, x_max]`.
    pub fn check_certificate(&self, points: usize, x_max: f64) -> bool {
        let Some(c) = self.certificate else { return false };
        grid(0.0, x_max, points)
            .into_iter()
            .all(|x| self.eval(x) <= c.c1 * (x.powf(c.alpha) + 1.0) * (1.0 + 1e-12))
    }
}

fn piecewise(breaks: &[f64], slopes: &[f64]) -> Result<Kind> {
    if slopes.len() != breaks.len() + 1 {
        return Err(invalid("piecewise utility needs one more slope than breakpoints"));
    }
    if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
        return Err(invalid("piecewise breakpoints must be finite and strictly increasing"));
    }
    if slopes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(invalid("piecewise slopes must be finite and nonnegative"));
    }
    if slopes.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("piecewise slopes must be nonincreasing (concavity)"));
    }
    if slopes[0] == 0.0 {
        return Err(invalid("piecewise utility is constant"));
    }
    // anchors[j] = u(breaks[j]) with u(0) = 0.
    let mut anchors = vec![0.0; breaks.len()];
    let z = breaks.partition_point(|&b| b <= 0.0);
    for j in z..breaks.len() {
        let (x0, u0) = if j == z { (0.0, 0.0) } else { (breaks[j - 1], anchors[j - 1]) };
        anchors[j] = u0 + slopes[j] * (breaks[j] - x0);
    }
    for j in (0..z).rev() {
        let (x0, u0) = if j + 1 == z { (0.0, 0.0) } else { (breaks[j + 1], anchors[j + 1]) };
        anchors[j] = u0 - slopes[j + 1] * (x0 - breaks[j]);
    }
    Ok(Kind::Piecewise { breaks: breaks.to_vec(), slopes: slopes.to_vec(), anchors })
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|j| lo + step * j as f64).collect()
}

/// Concavity and monotonicity on a uniform grid. Nodes where `u` is not
/// representable (for instance `e^{1000}`) are skipped and counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeReport {
    pub points: usize,
    pub skipped: usize,
    pub concave: bool,
    pub nondecreasing: bool,
}

pub fn shape_check(u: &UtilityFunction, lo: f64, hi: f64, points: usize) -> ShapeReport {
    let xs = grid(lo, hi, points);
    let vals: Vec<(f64, f64)> = xs.iter().map(|&x| (x, u.eval(x))).filter(|(_, v)| v.is_finite()).collect();
    let skipped = points - vals.len();
    let slopes: Vec<f64> = vals.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let tol = |s: f64| 1e-9 * (1.0 + s.abs());
    let nondecreasing = slopes.iter().all(|&s| s >= -tol(s));
    let concave = slopes.windows(2).all(|w| w[1] <= w[0] + tol(w[0]));
    ShapeReport { points, skipped, concave, nondecreasing }
}

/// Constants with `u(x) ≤ −c|x| + C` for every `x ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LenaConstants {
    pub c: f64,
    pub big_c: f64,
    pub x_star: f64,
}

/// Lower end of the window searched and certified.
pub const LENA_WINDOW: f64 = -1e6;

/// Locates `x* < 0` with `u(x*) < 0` and left slope `d* > 0`, then sets
/// `c = d*`, `C = d*|x*| + |u(0)|`. Concavity makes the bound hold left of
/// `x*`; monotonicity makes it hold on `[x*, 0]`. The result is checked on
/// a grid before being returned.
pub fn lena_constants(u: &UtilityFunction) -> Result<LenaConstants> {
    let mut x = -1.0;
    while x >= LENA_WINDOW {
        let ux = u.eval(x);
        let d = u.left_deriv(x);
        if ux < 0.0 && d > 0.0 && d.is_finite() {
            let out = LenaConstants { c: d, big_c: d * x.abs() + u.eval(0.0f64).abs(), x_star: x };
            if !certify_lena(u, out.c, out.big_c) {
                return Err(invalid("lemma construction failed its grid certificate"));
            }
            return Ok(out);
        }
        x *= 2.0;
    }
    Err(ApmError::ConstantUtility)
}

/// Grid check of `u(x) ≤ −c|x| + C` on 10⁴ points of `[−10⁶, 0]`, half
/// of them log-spaced so that the region near zero is resolved.
pub fn certify_lena(u: &UtilityFunction, c: f64, big_c: f64) -> bool {
    let half = 5_000;
    let linear = grid(LENA_WINDOW, 0.0, half);
    let logs = (0..half).map(|j| -(10f64).powf(-6.0 + 12.0 * j as f64 / (half - 1) as f64));
    linear.into_iter().chain(logs).all(|x| {
        let ux = u.eval(x);
        // Values below the float range satisfy the bound trivially.
        ux == f64::NEG_INFINITY || ux <= -c * x.abs() + big_c + 1e-12 * (1.0 + big_c.abs())
    })
}

/// Grid on which the Young pair is tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoungGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for YoungGrid {
    fn default() -> Self {
        Self { x_min: 1e-2, x_max: 1e2, points: 200 }
    }
}

/// Loss function `Φ(x) = −u(−x)` and its conjugate, tabulated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YoungPair {
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    pub report: ModerationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModerationReport {
    /// `sup Φ(2x)/Φ(x)` over the grid's upper decade.
    pub phi_doubling: f64,
    /// `sup Ψ(2y)/Ψ(y)` over the upper decade of the `y` grid, if that grid
    /// is nonempty.
    pub psi_doubling: Option<f64>,
    /// `Φ(x)/x` at the top of the grid and one decade below.
    pub growth_top: f64,
    pub growth_decade_below: f64,
    pub superlinear: bool,
    pub phi_delta2: bool,
    pub psi_delta2: Option<bool>,
    pub verdict: ModerationVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModerationVerdict {
    Moderate,
    /// Finite-grid evidence against; never a proof.
    NotModerate,
}

impl UtilityFunction {
    pub fn loss(&self, x: f64) -> f64 {
        -self.eval(-x)
    }

    fn loss_slope(&self, x: f64) -> f64 {
        self.deriv(-x)
    }

    /// `Ψ(y) = sup_{x≥0} {xy − Φ(x)}` by bisection on the monotone
    /// first-order condition `Φ′(x) = y`.
    pub fn conjugate(&self, y: f64) -> f64 {
        if self.loss_slope(0.0) >= y {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.loss_slope(hi) < y {
            hi *= 2.0;
            if hi > 1e15 {
                return f64::INFINITY;
            }
        }
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.loss_slope(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let val = |x: f64| x * y - self.loss(x);
        val(lo).max(val(hi))
    }
}

/// Tabulates `Φ`, `Ψ` and the moderation ratios. Δ₂ is judged on the
/// upper decade: the doubling ratio there must be finite and no more than
/// 1.5 times its value one decade lower. Superlinearity needs `Φ(x)/x` to
/// grow by at least 0.1% across the upper decade.
pub fn young_pair(u: &UtilityFunction, g: YoungGrid) -> YoungPair {
    let log_grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(|j| (a + (b - a) * j as f64 / (n - 1) as f64).exp()).collect()
    };
    let x = log_grid(g.x_min, g.x_max, g.points);
    let phi: Vec<f64> = x.iter().map(|&v| u.loss(v)).collect();

    let doubling = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> f64 {
        log_grid(lo, hi, 50)
            .into_iter()
            .map(|v| {
                let (a, b) = (f(2.0 * v), f(v));
                if b > 0.0 { a / b } else { f64::INFINITY }
            })
            .fold(0.0, f64::max)
    };
    let loss = |v: f64| u.loss(v);
    let top = g.x_max / 2.0;
    let phi_doubling = doubling(&loss, top / 10.0, top);
    let phi_below = doubling(&loss, top / 100.0, top / 10.0);
    let phi_delta2 = phi_doubling.is_finite() && phi_doubling <= 1.5 * phi_below;

    let growth_top = u.loss(g.x_max) / g.x_max;
    let growth_decade_below = u.loss(g.x_max / 10.0) / (g.x_max / 10.0);
    let superlinear = growth_top > growth_decade_below * (1.0 + 1e-3);

    let y_lo = u.loss_slope(g.x_min).max(1e-12);
    let y_hi = u.loss_slope(g.x_max) / 2.0;
    let (y, psi, psi_doubling, psi_delta2) = if y_hi > y_lo * 1.0001 && y_hi.is_finite() {
        let y = log_grid(y_lo, y_hi, g.points);
        let psi: Vec<f64> = y.iter().map(|&v| u.conjugate(v)).collect();
        let conj = |v: f64| u.conjugate(v);
        let top_y = y_hi;
        let d = doubling(&conj, top_y / 10.0, top_y);
        let below = doubling(&conj, top_y / 100.0, top_y / 10.0);
        (y, psi, Some(d), Some(d.is_finite() && d <= 1.5 * below))
    } else {
        (Vec::new(), Vec::new(), None, None)
    };

    let verdict = if superlinear && phi_delta2 {
        ModerationVerdict::Moderate
    } else {
        ModerationVerdict::NotModerate
    };
    YoungPair {
        x,
        phi,
        y,
        psi,
        report: ModerationReport {
            phi_doubling,
            psi_doubling,
            growth_top,
            growth_decade_below,
            superlinear,
            phi_delta2,
            psi_delta2,
            verdict,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn builtins() -> Vec<UtilityFunction> {
        vec![
            make_proof_u1(0.5).unwrap(),
            make_proof_u1(0.05).unwrap(),
            make_proof_un(2.0 / 3.0).unwrap(),
            make_proof_un(0.1).unwrap(),
            UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 2.0, p: 2.0 }).unwrap(),
            UtilityFunction::new(UtilitySpec::ExponentialBounded { rate: 1.0 }).unwrap(),
            UtilityFunction::new(UtilitySpec::QuadraticCapped { a: 0.25 }).unwrap(),
            UtilityFunction::new(UtilitySpec::Piecewise {
                breakpoints: vec![-1.0, 2.0],
                slopes: vec![3.0, 1.0, 0.5],
            })
            .unwrap(),
            UtilityFunction::new(UtilitySpec::Linear { slope: 1.0 }).unwrap(),
        ]
    }

    #[test]
    fn proof_u1_formulas() {
        let u = make_proof_u1(0.5).unwrap();
        assert_eq!(u.eval_unnormalized(0.0f64), -1.0);
        assert_eq!(u.eval_unnormalized(-2.0f64), -2.0);
        assert_eq!(u.left_deriv(0.0f64), 0.5);
        assert_eq!(u.left_deriv(-1e-300f64), 0.5);
        assert_eq!(u.right_deriv(0.0f64), 0.5);
        assert_eq!(u.eval(0.0f64), 0.0);
        assert!(u.eval_unnormalized(1e12f64) < 0.0 && u.eval_unnormalized(1e12f64) > -1e-5);
        assert_eq!(u.sup_derivative(), Some(0.5));
        assert!(make_proof_u1(1.0).is_err() && make_proof_u1(0.0).is_err());
    }

    #[test]
    fn proof_un_formulas() {
        let u = make_proof_un(2.0 / 3.0).unwrap();
        assert_eq!(u.eval_unnormalized(0.0f64), 1.0);
        assert_relative_eq!(u.right_deriv(0.0f64), 2.0 / 3.0);
        assert_relative_eq!(u.left_deriv(-1e-300f64), 2.0 / 3.0);
        let h = make_proof_un(0.5).unwrap();
        assert_eq!(h.eval_unnormalized(3.0f64), 2.0);
        assert_eq!(h.eval_unnormalized(-1.0f64), 0.5);
        assert!(h.check_certificate(10_000, 1e6));
        assert_eq!(h.certificate(), Some(GrowthCertificate { c1: 2.0, alpha: 0.5 }));
        assert!(make_proof_un(1.0).is_err());
    }

    #[test]
    fn all_builtins_are_normalized_concave_nondecreasing() {
        for u in builtins() {
            assert_eq!(u.eval(0.0f64), 0.0, "{}", u.label());
            let r = shape_check(&u, -1e3, 1e3, 10_000);
            assert!(r.concave && r.nondecreasing, "{} {r:?}", u.label());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for u in builtins() {
            let kinks = u.kinks();
            for j in 0..400 {
                let x = -20.0 + 0.1 * j as f64 + 0.0123;
                if kinks.iter().any(|k| (k - x).abs() < 1e-3) {
                    continue;
                }
                if let UtilitySpec::QuadraticCapped { a } = u.spec() {
                    if (x - 1.0 / (2.0 * a)).abs() < 1e-3 {
                        continue;
                    }
                }
                let h = 1e-6 * (1.0 + x.abs());
                let fd = (u.eval(x + h) - u.eval(x - h)) / (2.0 * h);
                let d = u.deriv(x);
                assert!((fd - d).abs() <= 1e-6f64.max(1e-6 * d.abs()) * 10.0, "{} at {x}: {fd} vs {d}", u.label());
            }
        }
    }

    #[test]
    fn piecewise_kinks_use_average_slope() {
        let u = UtilityFunction::new(UtilitySpec::Piecewise { breakpoints: vec![0.0], slopes: vec![2.0, 1.0] }).unwrap();
        assert_eq!(u.deriv(0.0f64), 1.5);
        assert_eq!(u.eval(-1.0f64), -2.0);
        assert_eq!(u.eval(3.0f64), 3.0);
        assert!(UtilityFunction::new(UtilitySpec::Piecewise { breakpoints: vec![0.0], slopes: vec![1.0, 2.0] }).is_err());
    }

    #[test]
    fn growth_classes() {
        assert!(matches!(make_proof_u1(0.3).unwrap().growth(), GrowthClass::BoundedAbove { sup } if (sup - 1.0).abs() < 1e-15));
        assert!(matches!(make_proof_un(0.3).unwrap().growth(), GrowthClass::Certified(_)));
        let lin = UtilityFunction::new(UtilitySpec::Linear { slope: 1.0 }).unwrap();
        assert_eq!(lin.growth(), GrowthClass::Uncontrolled);
        let q = UtilityFunction::new(UtilitySpec::QuadraticCapped { a: 0.25 }).unwrap();
        assert_eq!(q.sup_value(), Some(1.0));
        let capped = UtilityFunction::new(UtilitySpec::Piecewise { breakpoints: vec![-1.0, 2.0], slopes: vec![2.0, 1.0, 0.0] }).unwrap();
        assert_eq!(capped.sup_value(), Some(2.0));
        // a user certificate can replace the missing one
        let pw = UtilityFunction::new(UtilitySpec::Piecewise { breakpoints: vec![0.0], slopes: vec![1.0, 0.5] }).unwrap();
        assert!(pw.with_certificate(GrowthCertificate { c1: 1.0, alpha: 0.5 }).is_err());
    }

    #[test]
    fn lena_examples() {
        let exp = UtilityFunction::new(UtilitySpec::ExponentialBounded { rate: 1.0 }).unwrap();
        assert!(certify_lena(&exp, 1.0, 0.0));
        let l = lena_constants(&exp).unwrap();
        assert!(l.c > 0.0 && certify_lena(&exp, l.c, l.big_c));

        let pow = UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 2.0, p: 2.0 }).unwrap();
        for c in [0.1, 1.0, 5.0, 40.0] {
            assert!(certify_lena(&pow, c, c * c / 8.0));
            assert!(!certify_lena(&pow, c, c * c / 8.0 * 0.9));
        }
        let u1 = make_proof_u1(0.5).unwrap();
        let l = lena_constants(&u1).unwrap();
        assert_eq!((l.c, l.big_c), (0.5, 0.5));
        for u in builtins() {
            let l = lena_constants(&u).unwrap();
            assert!(l.c > 0.0, "{}", u.label());
        }
    }

    #[test]
    fn constant_loss_side_is_reported() {
        let pw = UtilityFunction::new(UtilitySpec::Piecewise { breakpoints: vec![-1e7], slopes: vec![1.0, 0.0] });
        // slopes nonincreasing and first positive, but the window sees only the flat part
        let pw = pw.unwrap();
        assert_eq!(lena_constants(&pw), Err(ApmError::ConstantUtility));
    }

    #[test]
    fn young_pair_examples() {
        let sq = UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 1.0, p: 2.0 }).unwrap();
        let yp = young_pair(&sq, YoungGrid::default());
        assert_relative_eq!(yp.report.phi_doubling, 4.0, max_relative = 1e-9);
        assert_relative_eq!(yp.report.psi_doubling.unwrap(), 4.0, max_relative = 1e-6);
        for (y, psi) in yp.y.iter().zip(&yp.psi) {
            assert_relative_eq!(*psi, y * y / 4.0, max_relative = 1e-9);
        }
        assert_eq!(yp.report.verdict, ModerationVerdict::Moderate);

        let exp = UtilityFunction::new(UtilitySpec::ExponentialBounded { rate: 1.0 }).unwrap();
        let ye = young_pair(&exp, YoungGrid::default());
        assert!(!ye.report.phi_delta2);
        assert_eq!(ye.report.verdict, ModerationVerdict::NotModerate);
        for (y, psi) in ye.y.iter().zip(&ye.psi) {
            assert_relative_eq!(*psi, y * y.ln() - y + 1.0, max_relative = 1e-8, epsilon = 1e-12);
        }

        let lin = UtilityFunction::new(UtilitySpec::Linear { slope: 2.0 }).unwrap();
        let yl = young_pair(&lin, YoungGrid::default());
        assert!(!yl.report.superlinear);
        assert_relative_eq!(yl.report.growth_top, 2.0);
        assert_eq!(yl.report.verdict, ModerationVerdict::NotModerate);
    }

    #[test]
    fn scaling_and_single_precision() {
        let u = make_proof_un(0.5).unwrap();
        let v = u.scaled(3.0).unwrap();
        assert_relative_eq!(v.eval(2.0f64), 3.0 * u.eval(2.0f64));
        assert_relative_eq!(v.deriv(-1.0f64), 3.0 * u.deriv(-1.0f64));
        assert!((u.eval(3.0f32) - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn fenchel_young_inequality(x in 0.0f64..50.0, y in 0.0f64..50.0, which in 0usize..4) {
            let u = match which {
                0 => UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 1.0, p: 2.0 }).unwrap(),
                1 => UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 0.5, p: 3.0 }).unwrap(),
                2 => UtilityFunction::new(UtilitySpec::ExponentialBounded { rate: 1.0 }).unwrap(),
                _ => make_proof_un(0.5).unwrap(),
            };
            let psi = u.conjugate(y);
            prop_assert!(x * y <= u.loss(x) + psi + 1e-9 * (1.0 + psi.abs()));
        }

        #[test]
        fn loss_is_convex_nondecreasing_from_zero(x in 0.0f64..100.0, t in 0.0f64..1.0, z in 0.0f64..100.0) {
            let u = UtilityFunction::new(UtilitySpec::PowerModerate { lambda: 1.5, p: 2.5 }).unwrap();
            prop_assert_eq!(u.loss(0.0), 0.0);
            let mid = u.loss(t * x + (1.0 - t) * z);
            prop_assert!(mid <= t * u.loss(x) + (1.0 - t) * u.loss(z) + 1e-9);
            prop_assert!(u.loss(x.max(z)) >= u.loss(x.min(z)));
        }
    }
}
