//! Arbitrage Pricing Model with countably many assets.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the command-line front end uses.

pub mod arbitrage;
pub mod config;
pub mod error;
pub mod market;
pub mod optimizer;
pub mod risk_neutral;
pub mod scalar;
pub mod sequence;
pub mod shocks;
pub mod utility;
pub mod valuation;

pub use error::{ApmError, Result};
pub use scalar::Scalar;

pub type Market = market::MarketParams<f64>;
pub type Reduced = market::ReducedParams<f64>;
pub type Strategy = market::Strategy<f64>;
pub type Pool = valuation::SamplePool<f64>;
pub type Problem<'a> = optimizer::OptimizationProblem<'a, f64>;
pub type Rule = sequence::TailRule<f64>;
pub type Seq = sequence::Sequence<f64>;
