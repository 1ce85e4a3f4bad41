//! Candidate risk-neutral densities `dQ/dP = u′(V(φ*)) / Ê u′(V(φ*))`
//! represented as weights on a sample pool, their verification, and the
//! staged construction that raises the admissible growth exponent.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ApmError, Result};
use crate::market::ReducedParams;
use crate::optimizer::{maximize_segment, OptimizationProblem, OptimizationResult, SolverSettings, SolverStatus};
use crate::scalar::{CompensatedSum, MomentAccumulator, Scalar};
use crate::shocks::{check_assumption_relevant, RelevanceVerdict, ShockFamily};
use crate::utility::{make_proof_u1, make_proof_un, UtilityFunction, UtilitySpec};
use crate::valuation::{expectation_under_density, values_dense, SamplePool};

/// Density as one weight per pool row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub source: String,
    pub phi_star: Vec<f64>,
    #[serde(skip)]
    pub weights: Vec<f64>,
    /// `Ê u′(V(φ*))`; 1 for the trivial density.
    pub mean_marginal: f64,
    pub max_weight: f64,
    pub min_weight: f64,
    /// Analytic `sup u′ / Ê u′`, bounding every weight, when `sup u′` is known.
    pub linf_bound: Option<f64>,
}

impl DensityEstimate {
    /// `w ≡ 1`, i.e. `Q = P`.
    pub fn uniform(n: usize) -> Self {
        Self {
            source: "uniform".into(),
            phi_star: Vec::new(),
            weights: vec![1.0; n],
            mean_marginal: 1.0,
            max_weight: 1.0,
            min_weight: 1.0,
            linf_bound: Some(1.0),
        }
    }

    pub fn mean_weight(&self) -> f64 {
        CompensatedSum::from_iter(self.weights.iter().copied()).value() / self.weights.len() as f64
    }

    /// One `row,weight` line per pool row, after `#` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# source={}", self.source)?;
        writeln!(out, "# mean_marginal={:e}", self.mean_marginal)?;
        writeln!(out, "row,weight")?;
        for (j, w) in self.weights.iter().enumerate() {
            writeln!(out, "{j},{w:e}")?;
        }
        Ok(())
    }
}

/// Weights `u′(V_j(φ*))` normalized to unit mean on the pool.
pub fn construct_density<T: Scalar>(
    phi_star: &[f64],
    b: &ReducedParams<T>,
    u: &UtilityFunction,
    pool: &SamplePool<T>,
) -> Result<DensityEstimate> {
    let k = phi_star.len();
    if k > pool.indices() {
        return Err(ApmError::SupportExceedsPool { support: k, pool: pool.indices() });
    }
    b.sharpe_sum(k.max(1))?;
    let coeffs: Vec<T> = phi_star.iter().map(|&x| T::lit(x)).collect();
    let values = values_dense(&coeffs, &b.values(k), pool);
    let marg: Vec<f64> = values.iter().map(|&v| u.deriv(v).to_f64_lossy()).collect();
    if let Some(bad) = marg.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(ApmError::InvalidDensity(format!("u′ is {bad} on a sampled value")));
    }
    let mean = CompensatedSum::from_iter(marg.iter().copied()).value() / marg.len() as f64;
    let weights: Vec<f64> = marg.iter().map(|d| d / mean).collect();
    let (min_weight, max_weight) = weights.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    Ok(DensityEstimate {
        source: u.label(),
        phi_star: phi_star.to_vec(),
        weights,
        mean_marginal: mean,
        max_weight,
        min_weight,
        linf_bound: u.sup_derivative().map(|s| s / mean),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub index: usize,
    pub weighted_mean: f64,
    pub b: f64,
    /// `ρ_i = Ê_Q ε_i − b_i`.
    pub rho: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueCheck {
    pub phi: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskNeutralReport {
    pub tau: f64,
    pub residuals: Vec<ResidualRow>,
    pub value_checks: Vec<ValueCheck>,
    pub pass: bool,
}

/// Checks `Ê_Q ε_i = b_i` for `i` in `first..=last` and `Ê_Q V(φ) = 0`
/// for `random_strategies` random strategies supported there. A row passes
/// when its deviation is at most `max(τ, 3 SE)`.
pub fn verify_risk_neutral<T: Scalar>(
    density: &DensityEstimate,
    pool: &SamplePool<T>,
    b: &ReducedParams<T>,
    first: usize,
    last: usize,
    tau: f64,
    random_strategies: usize,
    seed: u64,
) -> Result<RiskNeutralReport> {
    if first == 0 || first > last || last > pool.indices() {
        return Err(invalid(format!("index range {first}..={last} outside the pool")));
    }
    if density.weights.len() != pool.samples() {
        return Err(invalid("density and pool sizes differ"));
    }
    b.sharpe_sum(last)?;
    let w = &density.weights;
    let mut residuals = Vec::with_capacity(last - first + 1);
    for i in first..=last {
        let bi = b.get(i).to_f64_lossy();
        let col = pool.column(i);
        let centred: MomentAccumulator = col.iter().zip(w).map(|(&e, &wj)| wj * (e.to_f64_lossy() - bi)).collect();
        let est = centred.estimate();
        residuals.push(ResidualRow {
            index: i,
            weighted_mean: est.mean + bi,
            b: bi,
            rho: est.mean,
            se: est.std_err,
            pass: est.mean.abs() <= tau.max(3.0 * est.std_err),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bv: Vec<T> = (first..=last).map(|i| b.get(i)).collect();
    let mut value_checks = Vec::with_capacity(random_strategies);
    for _ in 0..random_strategies {
        let phi: Vec<f64> = (first..=last).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs: Vec<T> = phi.iter().map(|&x| T::lit(x)).collect();
        let values: Vec<f64> = crate::valuation::values_dense_from(&coeffs, &bv, pool, first)
            .into_iter()
            .map(Scalar::to_f64_lossy)
            .collect();
        let est = expectation_under_density(&values, w)?;
        value_checks.push(ValueCheck {
            phi,
            mean: est.mean,
            se: est.std_err,
            pass: est.mean.abs() <= tau.max(3.0 * est.std_err),
        });
    }
    let pass = residuals.iter().all(|r| r.pass) && value_checks.iter().all(|c| c.pass);
    Ok(RiskNeutralReport { tau, residuals, value_checks, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub p: f64,
    /// `Ê[(dQ/dP)^p]`.
    pub dq_dp: f64,
    /// `Ê[(dP/dQ)^p]`.
    pub dp_dq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    pub max_weight: f64,
    pub min_weight: f64,
    pub linf_bound: Option<f64>,
    /// Exponent `q` with `dP/dQ ∈ L^q` predicted from `V(φ*) ∈ L²` and the
    /// growth of `1/u′`, for the families where that growth is known.
    pub predicted_dp_dq_exponent: Option<f64>,
    pub caveat: String,
}

pub fn density_moment_report(density: &DensityEstimate, p_list: &[f64], source: Option<&UtilitySpec>) -> MomentReport {
    let rows = p_list
        .iter()
        .map(|&p| {
            let n = density.weights.len() as f64;
            let up: f64 = CompensatedSum::from_iter(density.weights.iter().map(|w| w.powf(p))).value() / n;
            let down: f64 = CompensatedSum::from_iter(density.weights.iter().map(|w| w.powf(-p))).value() / n;
            MomentRow { p, dq_dp: up, dp_dq: down }
        })
        .collect();
    // 1/u′ grows like (1+x)^{1+ε} for u₁ and (1+x)^{1−κ} for uₙ; a power
    // r of an L² variable lies in L^{2/r}.
    let predicted = match source {
        Some(UtilitySpec::ProofU1 { epsilon }) => Some(2.0 / (1.0 + epsilon)),
        Some(UtilitySpec::ProofUn { kappa }) => Some(2.0 / (1.0 - kappa)),
        _ => None,
    };
    let caveat = if predicted.is_some() && density.linf_bound.is_some() {
        "finite-pool moments; analytic bounds from the utility family".to_string()
    } else {
        "empirical evidence only: finite-pool moments cannot certify integrability".to_string()
    };
    MomentReport {
        rows,
        max_weight: density.max_weight,
        min_weight: density.min_weight,
        linf_bound: density.linf_bound,
        predicted_dp_dq_exponent: predicted,
        caveat,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PSchedule {
    pub p: Vec<u64>,
    /// `p_n / (p_n + 1)`.
    pub alpha_ceiling: Vec<f64>,
}

impl PSchedule {
    /// `κ_n(ε) = p_n/(p_n+1) − ε`.
    pub fn kappa(&self, epsilon: f64) -> Vec<f64> {
        self.alpha_ceiling.iter().map(|a| a - epsilon).collect()
    }
}

/// `p₁ = 2`, `p_{n+1} = 2p_n + 2`.
pub fn p_schedule(n: usize) -> Result<PSchedule> {
    if n == 0 || n > 60 {
        return Err(invalid("schedule length must lie in 1..=60"));
    }
    let mut p = Vec::with_capacity(n);
    let mut cur = 2u64;
    for _ in 0..n {
        p.push(cur);
        cur = 2 * cur + 2;
    }
    let alpha_ceiling = p.iter().map(|&x| x as f64 / (x as f64 + 1.0)).collect();
    Ok(PSchedule { p, alpha_ceiling })
}

/// Minimal `n` with `p_n/(p_n+1) > target`.
pub fn stages_needed(target_alpha: f64) -> Result<usize> {
    if !(target_alpha > 0.0 && target_alpha < 1.0) {
        return Err(invalid("target_alpha must lie in (0,1)"));
    }
    let sched = p_schedule(60)?;
    sched
        .alpha_ceiling
        .iter()
        .position(|&a| a > target_alpha)
        .map(|i| i + 1)
        .ok_or_else(|| invalid("target_alpha too close to 1 for the schedule"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderSettings {
    pub target_alpha: f64,
    pub epsilon: f64,
    pub k: usize,
    /// Verification tolerance τ.
    pub tau: f64,
    pub random_strategies: usize,
    pub solver: SolverSettings,
}

impl Default for BuilderSettings {
    fn default() -> Self {
        Self { target_alpha: 0.8, epsilon: 0.05, k: 5, tau: 1e-6, random_strategies: 10, solver: SolverSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub utility: String,
    pub alpha_ceiling: f64,
    pub optimization: OptimizationResult,
    pub verification: RiskNeutralReport,
    pub moments: MomentReport,
    #[serde(skip)]
    pub density: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuilderReport {
    pub target_alpha: f64,
    pub epsilon: f64,
    pub schedule: PSchedule,
    pub stages: Vec<StageReport>,
    /// Solve of the `κ = target_alpha` problem.
    pub certification: OptimizationResult,
    pub certification_moments: MomentReport,
}

/// Moment exponents tabulated for every stage.
pub const STAGE_MOMENT_GRID: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Staged construction. Stage 1 solves the bounded-above `u₁(ε)` problem;
/// stage `j ≥ 2` solves `u_{j}` with `κ = p_{j−1}/(p_{j−1}+1) − ε`. The
/// number of stages is the least `n` with `p_n/(p_n+1) > target_alpha`.
/// Each stage must converge and its density must verify, otherwise the
/// run aborts with that stage's index. A final solve with
/// `κ = target_alpha` certifies solvability at the target exponent.
pub fn recursive_density_builder<T: Scalar>(
    family: &ShockFamily,
    b: &ReducedParams<T>,
    pool: &SamplePool<T>,
    settings: &BuilderSettings,
    seed: u64,
) -> Result<BuilderReport> {
    let n_star = stages_needed(settings.target_alpha)?;
    let schedule = p_schedule(n_star)?;
    let kappas = schedule.kappa(settings.epsilon);
    if !(settings.epsilon > 0.0 && settings.epsilon < 1.0) || kappas.iter().any(|&k| !(k > 0.0 && k < 1.0)) {
        return Err(invalid("epsilon must keep every κ_n inside (0,1)"));
    }
    if let Some(total) = b.sharpe_sum(settings.k)?.total {
        if !total.is_summable() {
            return Err(invalid("Σ b_i² diverges; no risk-neutral density exists"));
        }
    }
    let relevance = check_assumption_relevant(family, &[0.5, 1.0, 2.0, 4.0], &[2.0, 4.0, 8.0, 16.0], settings.k)?;
    if relevance.verdict == RelevanceVerdict::Violated {
        return Err(invalid(format!("shock family fails the relevance check: {}", relevance.reasons.join("; "))));
    }

    let mut stages = Vec::with_capacity(n_star);
    let mut warm: Option<Vec<f64>> = None;
    for stage in 1..=n_star {
        let u = if stage == 1 { make_proof_u1(settings.epsilon)? } else { make_proof_un(kappas[stage - 2])? };
        let fail = |reason: String| ApmError::StageFailed { stage, reason };
        let mut problem = OptimizationProblem::new(b, settings.k, &u, pool, settings.solver).map_err(|e| fail(e.to_string()))?;
        if let Some(w) = &warm {
            problem = problem.with_initial(w.clone())?;
        }
        let opt = maximize_segment(&problem).map_err(|e| fail(e.to_string()))?;
        if opt.status != SolverStatus::Converged || !opt.foc_within(settings.tau) {
            return Err(fail(format!("optimizer ended with status {:?}, max FOC residual {:e}", opt.status, opt.foc_max)));
        }
        let density = construct_density(&opt.phi_star, b, &u, pool).map_err(|e| fail(e.to_string()))?;
        let verification = verify_risk_neutral(
            &density,
            pool,
            b,
            1,
            settings.k,
            settings.tau,
            settings.random_strategies,
            seed.wrapping_add(stage as u64),
        )?;
        if !verification.pass {
            return Err(fail("density failed risk-neutral verification".into()));
        }
        let moments = density_moment_report(&density, &STAGE_MOMENT_GRID, Some(u.spec()));
        warm = Some(opt.phi_star.clone());
        stages.push(StageReport {
            stage,
            utility: u.label(),
            alpha_ceiling: schedule.alpha_ceiling[stage - 1],
            optimization: opt,
            verification,
            moments,
            density,
        });
    }

    let target = make_proof_un(settings.target_alpha)?;
    let fail = |reason: String| ApmError::StageFailed { stage: n_star + 1, reason };
    let problem = OptimizationProblem::new(b, settings.k, &target, pool, settings.solver)
        .and_then(|p| p.with_initial(warm.unwrap_or_else(|| vec![0.0; settings.k])))
        .map_err(|e| fail(e.to_string()))?;
    let certification = maximize_segment(&problem).map_err(|e| fail(e.to_string()))?;
    if certification.status != SolverStatus::Converged {
        return Err(fail(format!("target problem ended with status {:?}", certification.status)));
    }
    let last_density = &stages.last().expect("at least one stage").density;
    let certification_moments = density_moment_report(last_density, &STAGE_MOMENT_GRID, Some(target.spec()));
    Ok(BuilderReport {
        target_alpha: settings.target_alpha,
        epsilon: settings.epsilon,
        schedule,
        stages,
        certification,
        certification_moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::objective_and_gradient;
    use crate::utility::UtilitySpec;
    use approx::assert_relative_eq;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn exp_u() -> UtilityFunction {
        UtilityFunction::new(UtilitySpec::ExponentialBounded { rate: 1.0 }).unwrap()
    }

    #[test]
    fn gaussian_tilt_density_is_risk_neutral() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::Gaussian, 3, 200_000, 41).unwrap();
        let b = ReducedParams::from_prefix(vec![0.3, -0.2, 0.1]);
        let d = construct_density(&[-0.3, 0.2, -0.1], &b, &exp_u(), &pool).unwrap();
        // Weights must be proportional to exp(Σ b_i(ε_i − b_i)).
        let raw: Vec<f64> = (0..200_000)
            .map(|j| (0..3).map(|l| b.get(l + 1) * (pool.column(l + 1)[j] - b.get(l + 1))).sum::<f64>().exp())
            .collect();
        let ratio = d.weights[0] / raw[0];
        for j in (0..200_000).step_by(997) {
            assert_relative_eq!(d.weights[j] / raw[j], ratio, max_relative = 1e-10);
        }
        let rep = verify_risk_neutral(&d, &pool, &b, 1, 3, 0.0, 10, 9).unwrap();
        assert!(rep.pass, "{rep:?}");
        let m = density_moment_report(&d, &[2.0], None);
        assert!((m.rows[0].dq_dp - 0.14f64.exp()).abs() < 0.02);
    }

    #[test]
    fn second_moment_of_one_dimensional_tilt() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::Gaussian, 1, 400_000, 43).unwrap();
        let b = ReducedParams::from_prefix(vec![0.3]);
        let d = construct_density(&[-0.3], &b, &exp_u(), &pool).unwrap();
        let m = density_moment_report(&d, &[2.0], None);
        let sq: MomentAccumulator = d.weights.iter().map(|w| w * w).collect();
        let est = sq.estimate();
        assert!((m.rows[0].dq_dp - 0.09f64.exp()).abs() <= 4.0 * est.std_err);
    }

    #[test]
    fn uniform_density_is_the_negative_control() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::Gaussian, 1, 50_000, 1).unwrap();
        let b = ReducedParams::from_prefix(vec![0.3]);
        let d = DensityEstimate::uniform(50_000);
        let rep = verify_risk_neutral(&d, &pool, &b, 1, 1, 1e-6, 0, 0).unwrap();
        assert!(!rep.pass);
        assert!((rep.residuals[0].rho + 0.3).abs() < 0.02);
        let zero = ReducedParams::from_prefix(vec![0.0]);
        assert!(verify_risk_neutral(&d, &pool, &zero, 1, 1, 1e-6, 10, 0).unwrap().pass);
        let m = density_moment_report(&d, &[1.0, 2.0, 3.0], None);
        assert!(m.rows.iter().all(|r| r.dq_dp == 1.0 && r.dp_dq == 1.0));
        assert_eq!((m.max_weight, m.min_weight), (1.0, 1.0));
    }

    #[test]
    fn zero_strategy_gives_unit_weights() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::StudentT { df: 4.0 }, 2, 1000, 1).unwrap();
        let b = ReducedParams::from_prefix(vec![0.0, 0.0]);
        let d = construct_density(&[0.0, 0.0], &b, &make_proof_un(0.5).unwrap(), &pool).unwrap();
        assert!(d.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn foc_equals_scaled_residual() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::PowerTail { theta: 5.0 }, 3, 30_000, 3).unwrap();
        let b = ReducedParams::from_prefix(vec![0.2, -0.1, 0.05]);
        let u = make_proof_un(0.5).unwrap();
        let p = OptimizationProblem::new(&b, 3, &u, &pool, SolverSettings::default()).unwrap();
        let phi = [0.4, -0.3, 0.1];
        let e = objective_and_gradient(&phi, &p).unwrap();
        let d = construct_density(&phi, &b, &u, &pool).unwrap();
        let rep = verify_risk_neutral(&d, &pool, &b, 1, 3, 0.0, 0, 0).unwrap();
        for l in 0..3 {
            assert!((e.grad[l] - rep.residuals[l].rho * d.mean_marginal).abs() <= 1e-10);
        }
    }

    #[test]
    fn proof_u1_density_is_bounded() {
        let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::Gaussian, 2, 20_000, 3).unwrap();
        let b = ReducedParams::from_prefix(vec![0.2, -0.1]);
        let u = make_proof_u1(0.3).unwrap();
        let r = maximize_segment(&OptimizationProblem::new(&b, 2, &u, &pool, SolverSettings::default()).unwrap()).unwrap();
        let d = construct_density(&r.phi_star, &b, &u, &pool).unwrap();
        let bound = d.linf_bound.unwrap();
        assert_relative_eq!(bound, 0.3 / d.mean_marginal);
        assert!(d.max_weight <= bound * (1.0 + 1e-12));
        let m = density_moment_report(&d, &[1.0, 2.0], Some(u.spec()));
        assert_relative_eq!(m.predicted_dp_dq_exponent.unwrap(), 2.0 / 1.3);
        assert!(verify_risk_neutral(&d, &pool, &b, 1, 2, 1e-6, 10, 5).unwrap().pass);
    }

    #[test]
    fn schedule_values() {
        let s = p_schedule(3).unwrap();
        assert_eq!(s.p, vec![2, 6, 14]);
        assert_eq!(s.alpha_ceiling, vec![2.0 / 3.0, 6.0 / 7.0, 14.0 / 15.0]);
        assert_eq!(s.kappa(0.1)[0], 2.0 / 3.0 - 0.1);
        assert_eq!(stages_needed(0.6).unwrap(), 1);
        assert_eq!(stages_needed(0.8).unwrap(), 2);
        assert!(p_schedule(0).is_err());
    }

    #[test]
    fn builder_runs_two_stages_for_point_eight() {
        let family = ShockFamily::Gaussian;
        let pool: SamplePool<f64> = SamplePool::build(&family, 3, 20_000, 17).unwrap();
        let b = ReducedParams::from_prefix(vec![0.2, -0.15, 0.1]);
        let settings = BuilderSettings { k: 3, ..Default::default() };
        let rep = recursive_density_builder(&family, &b, &pool, &settings, 17).unwrap();
        assert_eq!(rep.stages.len(), 2);
        assert!(rep.stages.iter().all(|s| s.verification.pass));
        assert_eq!(rep.certification.status, SolverStatus::Converged);
    }

    #[test]
    fn builder_refuses_violating_families() {
        let family = ShockFamily::Rademacher;
        let pool: SamplePool<f64> = SamplePool::build(&family, 2, 1000, 1).unwrap();
        let b = ReducedParams::from_prefix(vec![0.2, 0.1]);
        let settings = BuilderSettings { k: 2, ..Default::default() };
        assert!(recursive_density_builder(&family, &b, &pool, &settings, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn weights_positive_and_normalized(seed in any::<u64>(), which in 0usize..3) {
            let pool: SamplePool<f64> = SamplePool::build(&ShockFamily::StudentT { df: 5.0 }, 3, 2_000, seed).unwrap();
            let b = ReducedParams::from_prefix(vec![0.1, -0.2, 0.3]);
            let u = [make_proof_un(0.5).unwrap(), make_proof_u1(0.2).unwrap(), exp_u()][which].clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = construct_density(&phi, &b, &u, &pool).unwrap();
            prop_assert!(d.weights.iter().all(|&w| w > 0.0));
            prop_assert!((d.mean_weight() - 1.0).abs() <= 1e-12);
            let m = density_moment_report(&d, &[1.0, 1.5, 2.0, 3.0, 4.0], None);
            prop_assert!(m.rows.windows(2).all(|w| w[1].dp_dq >= w[0].dp_dq * (1.0 - 1e-12)));
        }
    }
}
