//! Regenerates the frozen thresholds in `fixtures/calibration.json`.
//!
//! The free-lunch bound comes from one simulation of 10⁴ paths with a seed
//! kept apart from the acceptance seed; the bound is the observed fraction
//! minus four binomial standard deviations at the acceptance path count.

use apm::arbitrage::free_lunch_demo_aba;
use apm::shocks::ShockFamily;

const ORACLE_SEED: u64 = 1001;
const ORACLE_PATHS: usize = 10_000;
const ACCEPTANCE_PATHS: usize = 1_000;
const K: usize = 10_000;
const M: f64 = 5.0;

fn main() {
    let report = free_lunch_demo_aba(&ShockFamily::TwoPointAba, &[K], ORACLE_SEED, ORACLE_PATHS, M).expect("demo runs");
    let f = report.rows[0].fraction_above;
    let sd = (f * (1.0 - f) / ACCEPTANCE_PATHS as f64).sqrt();
    let bound = f - 4.0 * sd;
    println!(
        "{{\"oracle_seed\": {ORACLE_SEED}, \"oracle_paths\": {ORACLE_PATHS}, \"k\": {K}, \"threshold\": {M}, \"oracle_fraction\": {f}, \"bound\": {:.4}}}",
        bound
    );
}
