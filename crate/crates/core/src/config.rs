//! Experiment configuration files (JSON or TOML).
//!
//! Every section except `market` has defaults, so a minimal file only
//! describes the market. Unknown keys are rejected and deserialization
//! errors carry the dotted path of the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arbitrage::NormalizedRule;
use crate::error::{ApmError, Result};
use crate::market::{MarketParams, ReducedParams, TailKnowledge};
use crate::optimizer::SolverSettings;
use crate::sequence::{Sequence, TailRule};
use crate::shocks::ShockFamily;
use crate::utility::{GrowthCertificate, UtilityFunction, UtilitySpec, YoungGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSpec,
    #[serde(default = "gaussian")]
    pub shocks: ShockFamily,
    #[serde(default)]
    pub utility: Option<UtilitySpec>,
    /// Optional growth certificate attached to `utility`.
    #[serde(default)]
    pub certificate: Option<GrowthCertificate>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Pool size, or path count for the simulation demos.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub validate: ValidateParams,
    #[serde(default)]
    pub optimize: OptimizeParams,
    #[serde(default)]
    pub sweep: SweepParams,
    #[serde(default)]
    pub density: DensityParams,
    #[serde(default)]
    pub arbitrage: ArbitrageParams,
}

fn gaussian() -> ShockFamily {
    ShockFamily::Gaussian
}

fn default_seed() -> u64 {
    1
}

fn default_samples() -> usize {
    100_000
}

/// Either reduced parameters `b` directly, or the raw factor description
/// `m, mu, beta, bar_beta` (never both).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<SeqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<SeqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar_beta: Option<SeqSpec>,
}

/// A plain list (nothing asserted past its end) or an optional prefix
/// followed by a closed-form rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeqSpec {
    List(Vec<f64>),
    Rule(RuleSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    #[serde(default)]
    pub prefix: Vec<f64>,
    pub rule: RuleKind,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// No parameters.
    Zero,
    /// `[value]`.
    Constant,
    /// `[scale, ratio]`: `scale · ratioⁱ`.
    Geometric,
    /// `[scale, exponent]`: `scale · i^(−exponent)`.
    Power,
    /// `[scale, ratio, exponent]`.
    General,
}

impl SeqSpec {
    fn build(&self, field: &str) -> Result<(Sequence<f64>, TailKnowledge)> {
        match self {
            SeqSpec::List(v) => {
                if v.is_empty() {
                    return Err(config_err(field, "empty list"));
                }
                check_finite(field, v)?;
                Ok((Sequence::finite(v.clone()), TailKnowledge::Unknown))
            }
            SeqSpec::Rule(r) => {
                check_finite(&format!("{field}.prefix"), &r.prefix)?;
                check_finite(&format!("{field}.params"), &r.params)?;
                let p = &r.params;
                let want = match r.rule {
                    RuleKind::Zero => 0,
                    RuleKind::Constant => 1,
                    RuleKind::Geometric | RuleKind::Power => 2,
                    RuleKind::General => 3,
                };
                if p.len() != want {
                    return Err(config_err(
                        &format!("{field}.params"),
                        &format!("rule {:?} takes {want} parameters, got {}", r.rule, p.len()),
                    ));
                }
                let rule = match r.rule {
                    RuleKind::Zero => TailRule::zero(),
                    RuleKind::Constant => TailRule::constant(p[0]),
                    RuleKind::Geometric => TailRule::geometric(p[0], p[1]),
                    RuleKind::Power => TailRule::power(p[0], p[1]),
                    RuleKind::General => TailRule { scale: p[0], ratio: p[1], exponent: p[2] },
                };
                Ok((Sequence::with_tail(r.prefix.clone(), rule), TailKnowledge::Known))
            }
        }
    }
}

fn check_finite(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(config_err(&format!("{field}[{i}]"), "value is not finite")),
        None => Ok(()),
    }
}

fn config_err(path: &str, message: &str) -> ApmError {
    ApmError::Config { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateParams {
    /// Number of `b_i` printed.
    pub prefix: usize,
    pub x_grid: Vec<f64>,
    pub level_grid: Vec<f64>,
    pub i_max: usize,
    pub young_grid: YoungGrid,
}

impl Default for ValidateParams {
    fn default() -> Self {
        Self {
            prefix: 10,
            x_grid: vec![0.5, 1.0, 2.0, 4.0],
            level_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            i_max: 1000,
            young_grid: YoungGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeParams {
    pub k: usize,
    /// Truncation indices for the gap table (empty: skipped).
    pub gap_n: Vec<usize>,
    /// Re-solve on pools of 4× and 16× the size.
    pub escalate: bool,
    pub initial: Option<Vec<f64>>,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self { k: 3, gap_n: Vec::new(), escalate: false, initial: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub k_grid: Vec<usize>,
    pub value_tol: f64,
    pub distance_tol: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self { k_grid: (1..=20).collect(), value_tol: 1e-3, distance_tol: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    /// Segment solved for `φ*`; defaults to `optimize.k`.
    pub k: Option<usize>,
    /// Last index checked by the verification (defaults to `k`).
    pub verify_last: Option<usize>,
    pub tau: f64,
    pub random_strategies: usize,
    pub p_list: Vec<f64>,
    /// Run the staged builder instead of a single solve.
    pub builder: bool,
    pub target_alpha: f64,
    pub epsilon: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            k: None,
            verify_last: None,
            tau: 1e-6,
            random_strategies: 10,
            p_list: vec![1.0, 2.0, 4.0, 8.0],
            builder: false,
            target_alpha: 0.8,
            epsilon: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArbitrageMode {
    #[default]
    Construct,
    FreeLunch,
    Closedness,
    Clt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrageParams {
    pub mode: ArbitrageMode,
    /// Checkpoints `k` for every mode except `clt`.
    pub k_grid: Vec<usize>,
    /// Level `M` of the free-lunch fraction `P(V > M)`.
    pub threshold: f64,
    /// Pass mark for the fraction above `threshold` at the last checkpoint.
    pub min_fraction: Option<f64>,
    /// Pass band for the median at the last closedness checkpoint.
    pub band: Option<[f64; 2]>,
    pub rule: NormalizedRule,
    pub n_grid: Vec<usize>,
    /// Pass mark for every KS distance in the CLT check.
    pub ks_max: Option<f64>,
}

impl Default for ArbitrageParams {
    fn default() -> Self {
        Self {
            mode: ArbitrageMode::Construct,
            k_grid: vec![1, 16, 256, 4096],
            threshold: 5.0,
            min_fraction: None,
            band: None,
            rule: NormalizedRule::EqualWeights,
            n_grid: vec![10_000],
            ks_max: None,
        }
    }
}

impl ExperimentConfig {
    /// Loads a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), &e.to_string()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            Some("toml") => Self::from_toml(&text),
            _ => Err(config_err(&path.display().to_string(), "expected a .json or .toml extension")),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(path_err)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("(document)", e.message()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(path_err)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that deserialization cannot express.
    pub fn check(&self) -> Result<()> {
        let m = &self.market;
        match (&m.b, m.m) {
            (Some(_), Some(_)) => return Err(config_err("market", "give either b or m/mu/beta/bar_beta, not both")),
            (None, None) => return Err(config_err("market", "no assets: give b or m/mu/beta/bar_beta")),
            (Some(b), None) => {
                if m.mu.is_some() || m.beta.is_some() || m.bar_beta.is_some() {
                    return Err(config_err("market", "mu/beta/bar_beta need m and exclude b"));
                }
                b.build("market.b")?;
            }
            (None, Some(_)) => {
                for (name, field) in [("mu", &m.mu), ("bar_beta", &m.bar_beta)] {
                    match field {
                        Some(s) => {
                            s.build(&format!("market.{name}"))?;
                        }
                        None => return Err(config_err(&format!("market.{name}"), "missing field")),
                    }
                }
            }
        }
        if self.samples < 2 {
            return Err(config_err("samples", "need at least 2 samples"));
        }
        if self.certificate.is_some() && self.utility.is_none() {
            return Err(config_err("certificate", "a certificate needs a utility"));
        }
        self.shocks.validate().map_err(|e| config_err("shocks", &e.to_string()))
    }

    /// Reduced parameters with at least `k` defined entries.
    pub fn reduced(&self, k: usize) -> Result<ReducedParams<f64>> {
        if let Some(b) = &self.market.b {
            let (seq, knowledge) = b.build("market.b")?;
            return Ok(ReducedParams::new(seq, knowledge));
        }
        self.market_params()?.reduce(k)
    }

    /// Raw market description, when the config gives one.
    pub fn market_params(&self) -> Result<MarketParams<f64>> {
        let m = &self.market;
        let factors = m.m.ok_or_else(|| config_err("market.m", "market is given by b"))?;
        let (mu, _) = m.mu.as_ref().ok_or_else(|| config_err("market.mu", "missing field"))?.build("market.mu")?;
        let (bar, _) =
            m.bar_beta.as_ref().ok_or_else(|| config_err("market.bar_beta", "missing field"))?.build("market.bar_beta")?;
        MarketParams::new(factors, mu, m.beta.clone().unwrap_or_default(), bar)
    }

    /// The configured utility with its certificate, if any.
    pub fn utility_function(&self) -> Result<UtilityFunction> {
        let spec = self.utility.clone().ok_or_else(|| config_err("utility", "this command needs a utility"))?;
        let u = UtilityFunction::new(spec)?;
        match self.certificate {
            Some(c) => u.with_certificate(c),
            None => Ok(u),
        }
    }

    pub fn density_k(&self) -> usize {
        self.density.k.unwrap_or(self.optimize.k)
    }

    /// Canonical JSON rendering, stable across runs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn path_err<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> ApmError {
    let path = e.path().to_string();
    ApmError::Config { path, message: e.into_inner().to_string() }
}
