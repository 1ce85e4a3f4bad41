//! Public-API checks against hand-derived values.

use apm::market::{MarketParams, ReducedParams, TailKnowledge};
use apm::risk_neutral::{verify_risk_neutral, DensityEstimate};
use apm::sequence::{Sequence, Summability, TailRule};
use apm::shocks::{aba_two_point, ShockFamily};
use apm::valuation::{expectation_under_density, value_moments};
use apm::{Pool, Strategy};

fn one_factor_market() -> MarketParams<f64> {
    MarketParams::new(1, Sequence::finite(vec![0.1, 0.05]), vec![vec![0.3]], Sequence::finite(vec![0.2, 0.1])).unwrap()
}

#[test]
fn reduction_by_hand() {
    let b = one_factor_market().reduce(2).unwrap();
    assert!((b.get(1) + 0.5).abs() < 1e-15);
    assert!((b.get(2) - 1.0).abs() < 1e-12);
    let zero = MarketParams::new(1, Sequence::zeros(3), vec![vec![0.4], vec![-0.2]], Sequence::finite(vec![1.0; 3]))
        .unwrap()
        .reduce(3)
        .unwrap();
    assert_eq!(zero.values(3), vec![0.0; 3]);
}

#[test]
fn coefficient_matching() {
    let m = one_factor_market();
    let phi = m.raw_to_factor(&[0.0, 1.0]).unwrap();
    assert!((phi.coefficient(1) - 0.3).abs() < 1e-15 && (phi.coefficient(2) - 0.1).abs() < 1e-15);
    let single = MarketParams::new(1, Sequence::finite(vec![0.1]), vec![], Sequence::finite(vec![0.2])).unwrap();
    let raw = single.factor_to_raw(&Strategy::from_vec(vec![0.2])).unwrap();
    assert!((raw.psi[0] + 1.0).abs() < 1e-15 && (raw.psi[1] - 1.0).abs() < 1e-15);
}

#[test]
fn sharpe_sums() {
    let geo = ReducedParams::from_rule(TailRule::geometric(1.0f64, 0.5));
    let total: f64 = geo.sharpe_sum(5).unwrap().total.unwrap().value().unwrap();
    assert!((total - 1.0 / 3.0).abs() < 1e-15);
    let ones = ReducedParams::from_rule(TailRule::constant(1.0f64));
    let s = ones.sharpe_sum(1000).unwrap();
    assert_eq!(s.partial, 1000.0);
    assert_eq!(s.total, Some(Summability::Divergent));
}

#[test]
fn two_point_law_is_standardized() {
    for n in [2usize, 3, 10, 1000] {
        let t = aba_two_point(n).unwrap();
        let mean = t.p_up * t.value_up + t.p_down * t.value_down;
        let second = t.p_up * t.value_up.powi(2) + t.p_down * t.value_down.powi(2);
        assert!(mean.abs() < 1e-12 && (second - 1.0).abs() < 1e-12, "n = {n}");
        assert!((t.p_down * (n * n) as f64 - 1.0).abs() < 1e-15);
    }
}

#[test]
fn value_moments_closed_form() {
    let b = ReducedParams::new(Sequence::with_tail(vec![0.3, -0.2], TailRule::zero()), TailKnowledge::Known);
    let m = value_moments(&Strategy::from_vec(vec![1.0, 2.0]), &b).unwrap();
    assert!((m.mean - 0.1).abs() < 1e-15);
    assert!((m.variance - 5.0).abs() < 1e-15);
}

#[test]
fn gaussian_tilt_is_risk_neutral_and_flat_weights_are_not() {
    let b_vals = [0.3, -0.2];
    let b = ReducedParams::from_prefix(b_vals.to_vec());
    let pool = Pool::build(&ShockFamily::Gaussian, 2, 100_000, 17).unwrap();
    let raw: Vec<f64> = (0..pool.samples())
        .map(|j| (b_vals[0] * pool.column(1)[j] + b_vals[1] * pool.column(2)[j]).exp())
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let weights: Vec<f64> = raw.iter().map(|w| w / mean).collect();
    let mut tilt = DensityEstimate::uniform(pool.samples());
    tilt.weights = weights.clone();
    let rep = verify_risk_neutral(&tilt, &pool, &b, 1, 2, 1e-6, 5, 1).unwrap();
    assert!(rep.pass, "{rep:?}");
    let e = expectation_under_density(pool.column(1), &weights).unwrap();
    assert!((e.mean - 0.3).abs() < 3.0 * e.std_err + 1e-3);

    let flat = DensityEstimate::uniform(pool.samples());
    assert!(!verify_risk_neutral(&flat, &pool, &b, 1, 2, 1e-6, 5, 1).unwrap().pass);
}
