//! `apm`: batch front end for the arbitrage pricing model library.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use apm::arbitrage::{
    asymptotic_arbitrage_construct, closedness_failure_demo, clt_normalized_check, free_lunch_demo_aba,
};
use apm::config::{ArbitrageMode, ExperimentConfig};
use apm::optimizer::{
    maximize_segment, pool_escalation, segment_sweep, truncation_gap, OptimizationProblem, SolverStatus,
};
use apm::risk_neutral::{
    construct_density, density_moment_report, recursive_density_builder, verify_risk_neutral, BuilderSettings,
};
use apm::shocks::{check_assumption_relevant, RelevanceVerdict};
use apm::utility::{lena_constants, shape_check, young_pair, GrowthClass};
use apm::{ApmError, Pool, Reduced};
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Process exit codes, one per failure class.
mod code {
    pub const OK: u8 = 0;
    /// File system or other unexpected failure.
    pub const IO: u8 = 1;
    /// Command line could not be parsed.
    pub const USAGE: u8 = 2;
    /// Config unreadable or invalid.
    pub const CONFIG: u8 = 3;
    /// `validate` found a violated assumption.
    pub const VIOLATED: u8 = 4;
    pub const MAX_ITER: u8 = 5;
    pub const DIVERGING: u8 = 6;
    pub const STALLED: u8 = 7;
    /// Risk-neutral verification of a density failed.
    pub const NOT_RISK_NEUTRAL: u8 = 8;
    /// Segment values decreased by more than 3 paired standard errors.
    pub const NOT_MONOTONE: u8 = 9;
    /// Objective rejected as unbounded before solving (e.g. linear utility).
    pub const UNBOUNDED: u8 = 10;
    /// A pass mark set in the `arbitrage` config section was missed.
    pub const CHECK_FAILED: u8 = 11;
    /// Numerical breakdown such as overflow or an invalid density.
    pub const NUMERICAL: u8 = 12;
    /// Staged density builder: stage `j` failed exits with `STAGE_BASE + j`.
    pub const STAGE_BASE: u8 = 20;
}

#[derive(Parser)]
#[command(name = "apm", version, about = "Arbitrage pricing model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (.json or .toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving the report files.
    #[arg(long, global = true, default_value = "apm-out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config sample (or path) count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Report reduced parameters and model diagnostics.
    Validate,
    /// Solve one market segment.
    Optimize,
    /// Solve a nested sequence of segments.
    Sweep,
    /// Build and verify a risk-neutral density.
    Density,
    /// Run the arbitrage mode named in the config.
    Arbitrage,
    /// Free-lunch demonstration under the two-point family.
    DemoAba,
    /// Closedness-failure demonstration under the two-point family.
    DemoClosedness,
    /// Normal approximation of normalized sums.
    CltCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
            Command::Density => "density",
            Command::Arbitrage => "arbitrage",
            Command::DemoAba => "demo-aba",
            Command::DemoClosedness => "demo-closedness",
            Command::CltCheck => "clt-check",
        }
    }
}

enum Failure {
    Apm(ApmError),
    Io(anyhow::Error),
}

impl From<ApmError> for Failure {
    fn from(e: ApmError) -> Self {
        Failure::Apm(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn error_code(e: &ApmError) -> u8 {
    match e {
        ApmError::Config { .. }
        | ApmError::InvalidParameter(_)
        | ApmError::ZeroBarBeta { .. }
        | ApmError::MissingCoefficient { .. }
        | ApmError::SingularTransform { .. }
        | ApmError::DivergentTail(_)
        | ApmError::SupportExceedsPool { .. }
        | ApmError::UnsupportedShock(_) => code::CONFIG,
        ApmError::UnboundedObjective(_) => code::UNBOUNDED,
        ApmError::StageFailed { stage, .. } => code::STAGE_BASE.saturating_add((*stage).min(200) as u8),
        ApmError::UnnormalizedDensity { .. }
        | ApmError::ObjectiveOverflow { .. }
        | ApmError::ConstantUtility
        | ApmError::InvalidDensity(_) => code::NUMERICAL,
    }
}

fn status_code(s: SolverStatus) -> u8 {
    match s {
        SolverStatus::Converged => code::OK,
        SolverStatus::MaxIter => code::MAX_ITER,
        SolverStatus::DivergingObjective => code::DIVERGING,
        SolverStatus::Stalled => code::STALLED,
    }
}

/// Common header of every JSON report.
#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    market_sha256: String,
    seed: u64,
    samples: usize,
    report: &'a R,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    command: Command,
    written: Vec<PathBuf>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Ctx {
    fn write_json<R: Serialize>(&mut self, name: &str, report: &R) -> Result<(), Failure> {
        let env = Envelope {
            tool: "apm",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.name(),
            config_sha256: sha256_hex(self.cfg.canonical_json().as_bytes()),
            market_sha256: sha256_hex(serde_json::to_string(&self.cfg.market).context("market")?.as_bytes()),
            seed: self.cfg.seed,
            samples: self.cfg.samples,
            report,
        };
        let mut text = serde_json::to_string_pretty(&env).context("serializing report")?;
        text.push('\n');
        self.write_file(name, text.as_bytes())
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), Failure> {
        let mut text = String::from(header);
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        self.write_file(name, text.as_bytes())
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    fn pool(&self, k: usize) -> Result<Pool, ApmError> {
        if self.cfg.antithetic {
            Pool::build_antithetic(&self.cfg.shocks, k, self.cfg.samples, self.cfg.seed)
        } else {
            Pool::build(&self.cfg.shocks, k, self.cfg.samples, self.cfg.seed)
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { code::USAGE } else { code::OK });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(code::IO);
        }
    }
    match run(&cli) {
        Ok(c) => ExitCode::from(c),
        Err(Failure::Apm(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code::IO)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| ApmError::Config { path: "--config".into(), message: "no config file given".into() })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples = n;
    }
    cfg.check()?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut ctx = Ctx { cfg, out: cli.out.clone(), command: cli.command, written: Vec::new() };
    let code = match cli.command {
        Command::Validate => cmd_validate(&mut ctx)?,
        Command::Optimize => cmd_optimize(&mut ctx)?,
        Command::Sweep => cmd_sweep(&mut ctx)?,
        Command::Density => cmd_density(&mut ctx)?,
        Command::Arbitrage => {
            let mode = ctx.cfg.arbitrage.mode;
            cmd_arbitrage(&mut ctx, mode)?
        }
        Command::DemoAba => cmd_arbitrage(&mut ctx, ArbitrageMode::FreeLunch)?,
        Command::DemoClosedness => cmd_arbitrage(&mut ctx, ArbitrageMode::Closedness)?,
        Command::CltCheck => cmd_arbitrage(&mut ctx, ArbitrageMode::Clt)?,
    };
    for p in &ctx.written {
        println!("wrote {}", p.display());
    }
    println!("exit: {code}");
    Ok(code)
}

#[derive(Serialize)]
struct MomentCheck {
    index: usize,
    law: String,
    mean: f64,
    variance: f64,
    ok: bool,
}

#[derive(Serialize)]
struct UtilitySummary {
    label: String,
    strictly_increasing: bool,
    strictly_concave: bool,
    growth: String,
    shape: apm::utility::ShapeReport,
    lena: Result<apm::utility::LenaConstants, String>,
    moderation: apm::utility::ModerationReport,
}

#[derive(Serialize)]
struct ValidationReport {
    b_prefix: Vec<f64>,
    tail_rule: bool,
    sharpe_partial: f64,
    sharpe_verdict: String,
    sharpe_total: Option<f64>,
    moments: Vec<MomentCheck>,
    relevance: apm::shocks::RelevanceReport,
    utility: Option<UtilitySummary>,
    violated: Vec<String>,
}

fn cmd_validate(ctx: &mut Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let p = &cfg.validate;
    let want = match cfg.market.m {
        Some(_) => p.prefix.min(cfg.market_params()?.defined_assets()),
        None => p.prefix,
    };
    let b = cfg.reduced(want.max(1))?;
    let known = if b.sequence().has_tail() { want } else { want.min(b.sequence().prefix_len()) };
    let k = known.max(1);
    let sharpe = b.sharpe_sum(k)?;
    let (verdict, total) = match sharpe.total {
        Some(s) => match s.value() {
            Some(v) => ("summable".to_string(), Some(v)),
            None => ("divergent".to_string(), None),
        },
        None => ("unknown tail".to_string(), None),
    };
    let mut violated = Vec::new();
    let moments: Vec<MomentCheck> = (1..=p.i_max.min(8))
        .map(|i| {
            let law = cfg.shocks.law(i);
            let (mean, variance) = (law.mean(), law.variance());
            let ok = mean.abs() <= 1e-12 && (variance - 1.0).abs() <= 1e-12;
            MomentCheck { index: i, law: format!("{law:?}"), mean, variance, ok }
        })
        .collect();
    for m in moments.iter().filter(|m| !m.ok) {
        violated.push(format!("shock {} is not centered with unit variance", m.index));
    }
    let relevance = check_assumption_relevant(&cfg.shocks, &p.x_grid, &p.level_grid, p.i_max)?;
    if relevance.verdict == RelevanceVerdict::Violated {
        violated.push(format!("assumption violated: {}", relevance.reasons.join("; ")));
    }
    let utility = match &cfg.utility {
        None => None,
        Some(_) => {
            let u = cfg.utility_function()?;
            let growth = match u.growth() {
                GrowthClass::BoundedAbove { sup } => format!("bounded above by {sup}"),
                GrowthClass::Certified(c) => format!("u(x) <= {}(x^{} + 1)", c.c1, c.alpha),
                GrowthClass::Uncontrolled => "uncontrolled".to_string(),
            };
            Some(UtilitySummary {
                label: u.label(),
                strictly_increasing: u.strictly_increasing(),
                strictly_concave: u.strictly_concave(),
                growth,
                shape: shape_check(&u, -50.0, 50.0, 2001),
                lena: lena_constants(&u).map_err(|e| e.to_string()),
                moderation: young_pair(&u, p.young_grid).report,
            })
        }
    };
    let report = ValidationReport {
        b_prefix: b.values(k),
        tail_rule: b.sequence().has_tail(),
        sharpe_partial: sharpe.partial,
        sharpe_verdict: verdict.clone(),
        sharpe_total: total,
        moments,
        relevance,
        utility,
        violated,
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "b[1..={k}] = [{}]", join(&report.b_prefix));
    match total {
        Some(t) => {
            let _ = writeln!(summary, "sharpe: {verdict}, S_inf={t}");
        }
        None => {
            let _ = writeln!(summary, "sharpe: {verdict}, S_{k}={}", report.sharpe_partial);
        }
    }
    let verdict_text = match report.relevance.verdict {
        RelevanceVerdict::Pass => "pass".to_string(),
        RelevanceVerdict::InconclusiveFiniteHorizon => "inconclusive (finite horizon)".to_string(),
        RelevanceVerdict::Violated => format!("violated ({})", report.relevance.reasons.join("; ")),
    };
    let _ = writeln!(summary, "assumption: {verdict_text}");
    print!("{summary}");
    ctx.write_json("validate.json", &report)?;
    ctx.write_file("validate.txt", summary.as_bytes())?;
    Ok(if report.violated.is_empty() { code::OK } else { code::VIOLATED })
}

#[derive(Serialize)]
struct OptimizeReport {
    result: apm::optimizer::OptimizationResult,
    truncation_gaps: Vec<apm::optimizer::GapRow>,
    escalation: Vec<apm::optimizer::EscalationRow>,
}

fn cmd_optimize(ctx: &mut Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let k = cfg.optimize.k;
    let b = cfg.reduced(k)?;
    let u = cfg.utility_function()?;
    let pool = ctx.pool(k)?;
    let mut problem = OptimizationProblem::new(&b, k, &u, &pool, cfg.solver)?;
    if let Some(init) = &cfg.optimize.initial {
        problem = problem.with_initial(init.clone())?;
    }
    let result = maximize_segment(&problem)?;
    let truncation_gaps = if cfg.optimize.gap_n.is_empty() {
        Vec::new()
    } else {
        truncation_gap(&result.phi_star, &cfg.optimize.gap_n, &b, &u, &pool)?
    };
    let escalation = if cfg.optimize.escalate {
        pool_escalation(&cfg.shocks, &b, k, &u, cfg.samples, cfg.seed, cfg.solver)?
    } else {
        Vec::new()
    };
    println!(
        "status: {:?}, value = {} ± {}, foc_max = {}",
        result.status, result.value, result.value_se, result.foc_max
    );
    let status = result.status;
    let rows: Vec<String> = result.phi_star.iter().enumerate().map(|(i, p)| format!("{},{}", i + 1, p)).collect();
    let report = OptimizeReport { result, truncation_gaps, escalation };
    ctx.write_json("optimize.json", &report)?;
    ctx.write_csv("phi_star.csv", "index,phi", rows)?;
    if !report.truncation_gaps.is_empty() {
        let rows = report
            .truncation_gaps
            .iter()
            .map(|g| format!("{},{},{},{},{}", g.n, g.gap, g.gap_se, g.raw_gap, g.raw_gap_se));
        ctx.write_csv("truncation_gap.csv", "n,gap,gap_se,raw_gap,raw_gap_se", rows)?;
    }
    Ok(status_code(status))
}

#[derive(Serialize)]
struct SweepOutput {
    sweep: apm::optimizer::SweepReport,
    /// `v_k − v_prev ≥ −3·SE` for every consecutive pair.
    monotone: bool,
    decreases: Vec<usize>,
}

fn cmd_sweep(ctx: &mut Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let p = &cfg.sweep;
    let k_max = p.k_grid.iter().copied().max().unwrap_or(0);
    let b = cfg.reduced(k_max.max(1))?;
    let u = cfg.utility_function()?;
    let pool = ctx.pool(k_max.max(1))?;
    let sweep = segment_sweep(&b, &u, &pool, cfg.solver, &p.k_grid, p.value_tol, p.distance_tol)?;
    let decreases: Vec<usize> = sweep
        .entries
        .windows(2)
        .filter(|w| w[1].value - w[0].value < -3.0 * w[1].increment_se.unwrap_or(0.0))
        .map(|w| w[1].k)
        .collect();
    let out = SweepOutput { monotone: decreases.is_empty(), decreases, sweep };
    let rows = out.sweep.entries.iter().map(|e| {
        format!(
            "{},{},{},{},{},{:?},{}",
            e.k,
            e.value,
            e.value_se,
            opt(e.increment_se),
            opt(e.distance_to_previous),
            e.status,
            e.foc_max
        )
    });
    let rows: Vec<String> = rows.collect();
    println!("segments: {}, monotone: {}, converged: {}", out.sweep.entries.len(), out.monotone, out.sweep.converged);
    ctx.write_json("sweep.json", &out)?;
    ctx.write_csv("sweep.csv", "k,value,value_se,increment_se,distance_to_previous,status,foc_max", rows)?;
    if let Some(bad) = out.sweep.entries.iter().find(|e| e.status != SolverStatus::Converged) {
        return Ok(status_code(bad.status));
    }
    Ok(if out.monotone { code::OK } else { code::NOT_MONOTONE })
}

#[derive(Serialize)]
struct DensityOutput {
    optimization: apm::optimizer::OptimizationResult,
    density: apm::risk_neutral::DensityEstimate,
    verification: apm::risk_neutral::RiskNeutralReport,
    moments: apm::risk_neutral::MomentReport,
}

fn cmd_density(ctx: &mut Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let p = &cfg.density;
    let k = cfg.density_k();
    let last = p.verify_last.unwrap_or(k).max(k);
    let b: Reduced = cfg.reduced(last)?;
    let pool = ctx.pool(last)?;
    if p.builder {
        let settings = BuilderSettings {
            target_alpha: p.target_alpha,
            epsilon: p.epsilon,
            k,
            tau: p.tau,
            random_strategies: p.random_strategies,
            solver: cfg.solver,
        };
        let report = recursive_density_builder(&cfg.shocks, &b, &pool, &settings, cfg.seed)?;
        println!(
            "schedule p = {:?}, stages = {}, all verified = {}",
            report.schedule.p,
            report.stages.len(),
            report.stages.iter().all(|s| s.verification.pass)
        );
        ctx.write_json("builder.json", &report)?;
        return Ok(code::OK);
    }
    let u = cfg.utility_function()?;
    let problem = OptimizationProblem::new(&b, k, &u, &pool, cfg.solver)?;
    let optimization = maximize_segment(&problem)?;
    let density = construct_density(&optimization.phi_star, &b, &u, &pool)?;
    let verification = verify_risk_neutral(&density, &pool, &b, 1, last, p.tau, p.random_strategies, cfg.seed)?;
    let moments = density_moment_report(&density, &p.p_list, cfg.utility.as_ref());
    println!(
        "solver: {:?}, verification: {}, weights in [{}, {}]",
        optimization.status,
        if verification.pass { "pass" } else { "fail" },
        density.min_weight,
        density.max_weight
    );
    let out = DensityOutput { optimization, density, verification, moments };
    let mut weights = Vec::new();
    out.density.write_csv(&mut weights)?;
    ctx.write_json("density.json", &out)?;
    ctx.write_file("weights.csv", &weights)?;
    if !out.verification.pass {
        return Ok(code::NOT_RISK_NEUTRAL);
    }
    Ok(status_code(out.optimization.status))
}

#[derive(Serialize)]
struct Checked<R: Serialize> {
    #[serde(flatten)]
    report: R,
    pass: Option<bool>,
}

fn cmd_arbitrage(ctx: &mut Ctx, mode: ArbitrageMode) -> Result<u8, Failure> {
    let cfg = ctx.cfg.clone();
    let p = &cfg.arbitrage;
    let verdict = |pass: Option<bool>| if pass == Some(false) { code::CHECK_FAILED } else { code::OK };
    match mode {
        ArbitrageMode::Construct => {
            let k_max = p.k_grid.iter().copied().max().unwrap_or(1);
            let b = cfg.reduced(k_max)?;
            let report = asymptotic_arbitrage_construct(&b, &p.k_grid)?;
            println!("sharpe: {:?}", report.verdict);
            let rows: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("{},{},{},{}", r.k, r.sharpe, opt(r.expected_value), opt(r.variance)))
                .collect();
            ctx.write_json("arbitrage.json", &report)?;
            ctx.write_csv("arbitrage.csv", "k,sharpe,expected_value,variance", rows)?;
            Ok(code::OK)
        }
        ArbitrageMode::FreeLunch => {
            let report = free_lunch_demo_aba(&cfg.shocks, &p.k_grid, cfg.seed, cfg.samples, p.threshold)?;
            let last = report.rows.last().map_or(0.0, |r| r.fraction_above);
            let pass = p.min_fraction.map(|m| last > m);
            println!("fraction above {} at k = {:?}: {last}", p.threshold, p.k_grid.last());
            let rows: Vec<String> = report
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{}",
                        r.k,
                        r.mean,
                        r.fraction_above,
                        r.analytic_mean,
                        r.analytic_variance,
                        join(&r.quantiles)
                    )
                })
                .collect();
            let out = Checked { report, pass };
            ctx.write_json("free_lunch.json", &out)?;
            ctx.write_csv(
                "free_lunch.csv",
                "k,mean,fraction_above,analytic_mean,analytic_variance,q01,q05,q25,q50,q75,q95,q99",
                rows,
            )?;
            Ok(verdict(pass))
        }
        ArbitrageMode::Closedness => {
            let report = closedness_failure_demo(&cfg.shocks, &p.k_grid, cfg.seed, cfg.samples)?;
            let (first, last) = (report.rows.first(), report.rows.last());
            let pass = p.band.map(|[lo, hi]| {
                let (f, l) = (first.expect("nonempty"), last.expect("nonempty"));
                l.median >= lo && l.median <= hi && (report.rows.len() == 1 || l.distance_to_one < f.distance_to_one)
            });
            println!("median at k = {:?}: {:?}", p.k_grid.last(), last.map(|r| r.median));
            let rows: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("{},{},{},{},{}", r.k, r.median, r.distance_to_one, r.analytic_variance, join(&r.quantiles)))
                .collect();
            let out = Checked { report, pass };
            ctx.write_json("closedness.json", &out)?;
            ctx.write_csv(
                "closedness.csv",
                "k,median,distance_to_one,analytic_variance,q01,q05,q25,q50,q75,q95,q99",
                rows,
            )?;
            Ok(verdict(pass))
        }
        ArbitrageMode::Clt => {
            let n_max = p.n_grid.iter().copied().max().unwrap_or(1);
            let b = cfg.reduced(n_max)?;
            let report = clt_normalized_check(p.rule, &b, &cfg.shocks, &p.n_grid, cfg.samples, cfg.seed)?;
            let pass = p.ks_max.map(|m| report.rows.iter().all(|r| r.ks <= m));
            for r in &report.rows {
                println!("n = {}: ks = {} (95% band {})", r.n, r.ks, r.ks_band);
            }
            let rows: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("{},{},{},{},{},{},{}", r.n, r.d, r.max_weight, r.ks, r.ks_band, r.p_negative, r.f_gauss))
                .collect();
            let out = Checked { report, pass };
            ctx.write_json("clt.json", &out)?;
            ctx.write_csv("clt.csv", "n,d,max_weight,ks,ks_band,p_negative,f_gauss", rows)?;
            Ok(verdict(pass))
        }
    }
}
