//! Expected-utility maximization over finite market segments by
//! sample-average approximation: the pool is frozen for a whole solve, so
//! the inner problem is a deterministic concave program.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ApmError, Result};
use crate::market::{ReducedParams, Strategy};
use crate::scalar::{CompensatedSum, MeanEstimate, MomentAccumulator, Scalar};
use crate::utility::{GrowthClass, UtilityFunction, UtilitySpec};
use crate::valuation::{PoolDescriptor, SamplePool, ROW_BLOCK};

/// Fraction of samples allowed to overflow before an evaluation aborts.
pub const OVERFLOW_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Sup-norm tolerance on the gradient after dividing by `u′(0)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Divergence radius; `None` uses `10³·(1 + ‖b‖)`.
    pub radius: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iter: 500, armijo: 1e-4, max_backtracks: 60, radius: None }
    }
}

/// One segment problem on a frozen pool.
#[derive(Debug, Clone)]
pub struct OptimizationProblem<'a, T: Scalar> {
    b: Vec<T>,
    utility: &'a UtilityFunction,
    pool: &'a SamplePool<T>,
    settings: SolverSettings,
    initial: Option<Vec<f64>>,
}

impl<'a, T: Scalar> OptimizationProblem<'a, T> {
    pub fn new(
        b: &ReducedParams<T>,
        k: usize,
        utility: &'a UtilityFunction,
        pool: &'a SamplePool<T>,
        settings: SolverSettings,
    ) -> Result<Self> {
        if k == 0 {
            return Err(invalid("segment size k must be at least 1"));
        }
        if k > pool.indices() {
            return Err(ApmError::SupportExceedsPool { support: k, pool: pool.indices() });
        }
        if !(settings.grad_tol > 0.0) {
            return Err(invalid("grad_tol must be positive"));
        }
        if !(settings.armijo > 0.0 && settings.armijo < 0.5) {
            return Err(invalid("armijo constant must lie in (0, 1/2)"));
        }
        b.sharpe_sum(k)?;
        check_growth(utility)?;
        Ok(Self { b: b.values(k), utility, pool, settings, initial: None })
    }

    pub fn with_initial(mut self, phi0: Vec<f64>) -> Result<Self> {
        if phi0.len() != self.k() {
            return Err(invalid("initial point has the wrong length"));
        }
        self.initial = Some(phi0);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn utility(&self) -> &UtilityFunction {
        self.utility
    }

    pub fn pool(&self) -> &SamplePool<T> {
        self.pool
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn radius(&self) -> f64 {
        self.settings.radius.unwrap_or_else(|| {
            let nb: f64 = self.b.iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
            1e3 * (1.0 + nb)
        })
    }
}

/// Rejects utilities whose gains side is not controlled: neither bounded
/// above nor certified with `α < 1`.
pub fn check_growth(u: &UtilityFunction) -> Result<()> {
    match u.growth() {
        GrowthClass::BoundedAbove { .. } => Ok(()),
        GrowthClass::Certified(c) if c.alpha < 1.0 => Ok(()),
        _ => match u.spec() {
            UtilitySpec::Linear { .. } => Err(ApmError::UnboundedObjective("linear u".into())),
            _ => Err(ApmError::UnboundedObjective(
                "u is neither bounded above nor certified with growth exponent < 1".into(),
            )),
        },
    }
}

/// Frozen-pool objective, gradient `ĝ_l = Ê[u′(V) J_l]`, and their
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: MeanEstimate,
    pub grad: Vec<f64>,
    pub grad_se: Vec<f64>,
    /// `Ê u⁻(V)`.
    pub loss_mean: f64,
    /// Samples where `u(V)` or `u′(V)` was not finite.
    pub flagged: usize,
}

struct BlockStats {
    value: MomentAccumulator,
    loss: CompensatedSum<f64>,
    grad: Vec<MomentAccumulator>,
    flagged: usize,
}

fn evaluate_raw<T: Scalar>(phi: &[f64], problem: &OptimizationProblem<'_, T>) -> Evaluation {
    let k = problem.k();
    assert_eq!(phi.len(), k, "strategy length must equal segment size");
    let pool = problem.pool;
    let u = problem.utility;
    let n = pool.samples();
    let coeffs: Vec<T> = phi.iter().map(|&x| T::lit(x)).collect();
    let blocks: Vec<BlockStats> = (0..n.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let start = blk * ROW_BLOCK;
            let end = (start + ROW_BLOCK).min(n);
            let len = end - start;
            let cols: Vec<&[T]> = (1..=k).map(|i| &pool.column(i)[start..end]).collect();
            let mut vals = vec![CompensatedSum::<T>::new(); len];
            for l in 0..k {
                let (c, bl) = (coeffs[l], problem.b[l]);
                if c == T::zero() {
                    continue;
                }
                for (a, &x) in vals.iter_mut().zip(cols[l]) {
                    a.add(c * (x - bl));
                }
            }
            let mut stats = BlockStats {
                value: MomentAccumulator::new(),
                loss: CompensatedSum::new(),
                grad: vec![MomentAccumulator::new(); k],
                flagged: 0,
            };
            for (j, acc) in vals.iter().enumerate() {
                let v = acc.value();
                let uv = u.eval(v).to_f64_lossy();
                let du = u.deriv(v).to_f64_lossy();
                if !uv.is_finite() || !du.is_finite() {
                    stats.flagged += 1;
                    continue;
                }
                stats.value.push(uv);
                if uv < 0.0 {
                    stats.loss.add(-uv);
                }
                for l in 0..k {
                    let jl = (cols[l][j] - problem.b[l]).to_f64_lossy();
                    stats.grad[l].push(du * jl);
                }
            }
            stats
        })
        .collect();
    let mut value = MomentAccumulator::new();
    let mut loss = CompensatedSum::new();
    let mut grad = vec![MomentAccumulator::new(); k];
    let mut flagged = 0;
    for b in &blocks {
        value.merge(&b.value);
        loss.merge(&b.loss);
        for (g, bg) in grad.iter_mut().zip(&b.grad) {
            g.merge(bg);
        }
        flagged += b.flagged;
    }
    let est: Vec<MeanEstimate> = grad.iter().map(MomentAccumulator::estimate).collect();
    Evaluation {
        value: value.estimate(),
        grad: est.iter().map(|e| e.mean).collect(),
        grad_se: est.iter().map(|e| e.std_err).collect(),
        loss_mean: loss.value() / n as f64,
        flagged,
    }
}

/// Objective and gradient at `phi` on the problem's pool. Aborts when more
/// than 0.1% of the samples overflow.
pub fn objective_and_gradient<T: Scalar>(phi: &[f64], problem: &OptimizationProblem<'_, T>) -> Result<Evaluation> {
    let e = evaluate_raw(phi, problem);
    let n = problem.pool.samples();
    if e.flagged as f64 > OVERFLOW_LIMIT * n as f64 {
        return Err(ApmError::ObjectiveOverflow { flagged: e.flagged, samples: n });
    }
    Ok(e)
}

/// Per-sample utilities `u(V_j(φ))`, for paired comparisons.
pub fn utility_samples<T: Scalar>(phi: &[f64], problem: &OptimizationProblem<'_, T>) -> Vec<f64> {
    let coeffs: Vec<T> = phi.iter().map(|&x| T::lit(x)).collect();
    crate::valuation::values_dense(&coeffs, &problem.b, problem.pool)
        .into_iter()
        .map(|v| problem.utility.eval(v).to_f64_lossy())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    DivergingObjective,
    /// The line search cannot improve the objective, yet the gradient is
    /// above both the tolerance and the noise level.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_inf: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub phi_star: Vec<f64>,
    pub value: f64,
    pub value_se: f64,
    pub foc: Vec<f64>,
    pub foc_se: Vec<f64>,
    pub foc_max: f64,
    pub loss_mean: f64,
    /// `‖H ĝ‖_∞` with `H` the final inverse-Hessian estimate: the size of
    /// the step still on offer, a proxy for the distance to the argmax.
    pub phi_accuracy: f64,
    pub iterations: Vec<IterationRecord>,
    pub pool: PoolDescriptor,
    pub status: SolverStatus,
}

impl OptimizationResult {
    pub fn strategy<T: Scalar>(&self) -> Strategy<T> {
        Strategy::from_vec(self.phi_star.iter().map(|&x| T::lit(x)).collect())
    }

    /// `max_l |FOC_l| ≤ max(tol, 3 SE_l)` for every coordinate.
    pub fn foc_within(&self, tol: f64) -> bool {
        self.foc.iter().zip(&self.foc_se).all(|(g, se)| g.abs() <= tol.max(3.0 * se))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton ascent (BFGS on the inverse Hessian) with Armijo
/// backtracking. Every accepted step strictly increases the objective.
pub fn maximize_segment<T: Scalar>(problem: &OptimizationProblem<'_, T>) -> Result<OptimizationResult> {
    let k = problem.k();
    let s = &problem.settings;
    let scale = {
        let d0 = problem.utility.slope_at_zero();
        if d0 > 0.0 && d0.is_finite() { 1.0 / d0 } else { 1.0 }
    };
    let radius = problem.radius();
    let mut x = problem.initial.clone().unwrap_or_else(|| vec![0.0; k]);
    let mut e = objective_and_gradient(&x, problem)?;
    if e.flagged > 0 {
        return Err(invalid("initial point has overflowing utility values"));
    }
    let mut h: Vec<f64> = vec![0.0; k * k];
    for i in 0..k {
        h[i * k + i] = 1.0;
    }
    let mut first = true;
    let mut trace = vec![IterationRecord { iter: 0, value: e.value.mean, grad_inf: inf_norm(&e.grad), step: 0.0 }];
    let mut status = SolverStatus::MaxIter;

    for iter in 1..=s.max_iter {
        if inf_norm(&e.grad) * scale <= s.grad_tol {
            status = SolverStatus::Converged;
            break;
        }
        // Ascent direction d = H g.
        let g = &e.grad;
        let mut d: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * g[j]).sum()).collect();
        let mut slope = dot(g, &d);
        if !(slope > 0.0) {
            // Lost positive definiteness numerically; restart from steepest ascent.
            h.iter_mut().enumerate().for_each(|(idx, v)| *v = if idx / k == idx % k { 1.0 } else { 0.0 });
            d = g.clone();
            slope = dot(g, g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..s.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let te = evaluate_raw(&trial, problem);
            if te.flagged == 0 && te.value.mean >= e.value.mean + s.armijo * step * slope && te.value.mean > e.value.mean {
                accepted = Some((trial, te));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, en)) = accepted else {
            status = SolverStatus::Stalled;
            break;
        };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Curvature pair for the minimization of −f.
        let yv: Vec<f64> = e.grad.iter().zip(&en.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-300 && sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            if first {
                let gamma = sy / dot(&yv, &yv);
                h.iter_mut().for_each(|v| *v *= gamma);
                first = false;
            }
            bfgs_update(&mut h, &sv, &yv, sy, k);
        }
        x = xn;
        e = en;
        trace.push(IterationRecord { iter, value: e.value.mean, grad_inf: inf_norm(&e.grad), step });
        if dot(&x, &x).sqrt() > radius {
            status = SolverStatus::DivergingObjective;
            break;
        }
    }
    if status == SolverStatus::Stalled || status == SolverStatus::MaxIter {
        // The frozen-pool optimum is only meaningful up to sampling noise.
        let tol = s.grad_tol / scale;
        if e.grad.iter().zip(&e.grad_se).all(|(g, se)| g.abs() <= tol.max(3.0 * se)) && status == SolverStatus::Stalled {
            status = SolverStatus::Converged;
        }
    }
    let remaining: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * e.grad[j]).sum()).collect();
    Ok(OptimizationResult {
        phi_accuracy: inf_norm(&remaining),
        foc_max: inf_norm(&e.grad),
        phi_star: x,
        value: e.value.mean,
        value_se: e.value.std_err,
        foc: e.grad,
        foc_se: e.grad_se,
        loss_mean: e.loss_mean,
        iterations: trace,
        pool: problem.pool.descriptor(),
        status,
    })
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, k: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: usize,
    pub value: f64,
    pub value_se: f64,
    /// Paired standard error of `v_k − v_{k_prev}` on the shared pool.
    pub increment_se: Option<f64>,
    /// `‖φ*(k)|_{≤k_prev} − φ*(k_prev)‖₂`.
    pub distance_to_previous: Option<f64>,
    pub status: SolverStatus,
    pub foc_max: f64,
    pub phi_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub value_tol: f64,
    pub distance_tol: f64,
    /// Both the last value increment and the last distance are within
    /// their tolerances.
    pub converged: bool,
}

/// Solves the nested segments `k_list` on one pool (common random numbers:
/// column `i` is shared by every `k ≥ i`), warm-starting each solve from
/// the previous optimum padded with zeros.
pub fn segment_sweep<T: Scalar>(
    b: &ReducedParams<T>,
    utility: &UtilityFunction,
    pool: &SamplePool<T>,
    settings: SolverSettings,
    k_list: &[usize],
    value_tol: f64,
    distance_tol: f64,
) -> Result<SweepReport> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("k_list must be nonempty and strictly ascending"));
    }
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(k_list.len());
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for &k in k_list {
        let mut problem = OptimizationProblem::new(b, k, utility, pool, settings)?;
        if let Some((phi, _)) = &prev {
            let mut start = phi.clone();
            start.resize(k, 0.0);
            problem = problem.with_initial(start)?;
        }
        let r = maximize_segment(&problem)?;
        let samples = utility_samples(&r.phi_star, &problem);
        let (increment_se, distance) = match &prev {
            None => (None, None),
            Some((phi_prev, u_prev)) => {
                let diff: MomentAccumulator = samples.iter().zip(u_prev).map(|(a, b)| a - b).collect();
                let dist = phi_prev
                    .iter()
                    .zip(&r.phi_star)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (Some(diff.estimate().std_err), Some(dist))
            }
        };
        entries.push(SweepEntry {
            k,
            value: r.value,
            value_se: r.value_se,
            increment_se,
            distance_to_previous: distance,
            status: r.status,
            foc_max: r.foc_max,
            phi_star: r.phi_star.clone(),
        });
        prev = Some((r.phi_star, samples));
    }
    let converged = match entries.as_slice() {
        [.., a, z] => {
            (z.value - a.value).abs() <= value_tol && z.distance_to_previous.unwrap_or(f64::INFINITY) <= distance_tol
        }
        _ => false,
    };
    Ok(SweepReport { entries, value_tol, distance_tol, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    /// `Ê u(V(φ*)) − Ê u(V(φ̄(n)))` with a zero-mean control variate removed.
    pub gap: f64,
    pub gap_se: f64,
    /// The same difference without the control variate.
    pub raw_gap: f64,
    pub raw_gap_se: f64,
}

/// Gaps between `φ*` and its truncations `φ̄(n)`. The control variate
/// `u′(V(φ̄(n)))·Σ_{i>n} φ*_i ε_i` has mean zero because the omitted shocks
/// are centered and independent of `V(φ̄(n))`.
pub fn truncation_gap<T: Scalar>(
    phi_star: &[f64],
    n_list: &[usize],
    b: &ReducedParams<T>,
    utility: &UtilityFunction,
    pool: &SamplePool<T>,
) -> Result<Vec<GapRow>> {
    let k = phi_star.len();
    if k > pool.indices() {
        return Err(ApmError::SupportExceedsPool { support: k, pool: pool.indices() });
    }
    let bv = b.values(k);
    let coeffs: Vec<T> = phi_star.iter().map(|&x| T::lit(x)).collect();
    let full = crate::valuation::values_dense(&coeffs, &bv, pool);
    let u_full: Vec<f64> = full.iter().map(|&v| utility.eval(v).to_f64_lossy()).collect();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n >= k {
            rows.push(GapRow { n, gap: 0.0, gap_se: 0.0, raw_gap: 0.0, raw_gap_se: 0.0 });
            continue;
        }
        let head = crate::valuation::values_dense(&coeffs[..n], &bv[..n], pool);
        let tail_noise = crate::valuation::values_dense_from(&coeffs[n..], &vec![T::zero(); k - n], pool, n + 1);
        let mut raw = MomentAccumulator::new();
        let mut adj = MomentAccumulator::new();
        for j in 0..pool.samples() {
            let d = u_full[j] - utility.eval(head[j]).to_f64_lossy();
            let cv = utility.deriv(head[j]).to_f64_lossy() * tail_noise[j].to_f64_lossy();
            raw.push(d);
            adj.push(d - cv);
        }
        let (r, a) = (raw.estimate(), adj.estimate());
        rows.push(GapRow { n, gap: a.mean, gap_se: a.std_err, raw_gap: r.mean, raw_gap_se: r.std_err });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscalationRow {
    pub samples: usize,
    pub value: f64,
    pub value_se: f64,
    pub status: SolverStatus,
}

/// Solves the same segment on pools of size `n`, `4n`, `16n` to expose the
/// optimistic bias of the sample-average optimum.
pub fn pool_escalation(
    family: &crate::shocks::ShockFamily,
    b: &ReducedParams<f64>,
    k: usize,
    utility: &UtilityFunction,
    n: usize,
    seed: u64,
    settings: SolverSettings,
) -> Result<Vec<EscalationRow>> {
    [1usize, 4, 16]
        .iter()
        .map(|&f| {
            let pool = SamplePool::<f64>::build(family, k, n * f, seed)?;
            let r = maximize_segment(&OptimizationProblem::new(b, k, utility, &pool, settings)?)?;
            Ok(EscalationRow { samples: n * f, value: r.value, value_se: r.value_se, status: r.status })
        })
        .collect()
}
