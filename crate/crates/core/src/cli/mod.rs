//! Batch front end: `rrhoc <command> --config <path> [--out <dir>]
//! [--seed <u64>] [--log-level <level>]`.
//!
//! Exit codes: 0 success or pass, 1 infeasible or failed certification,
//! 2 invalid input, 3 solver budget exhausted. Reports carry no wall-clock
//! data, so identical inputs give byte-identical files.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{load_gains, parse_json, Setup, ToolConfig};

use crate::certify::{certify, CertifyOptions};
use crate::error::{Error, Result};
use crate::lmi::{NetworkContext, NodeGains};
use crate::observer::{decay_rate_estimate, disagreement_cost, simulate};
use crate::solver::{
    analyze, minimize_gamma, synthesize, GammaProbe, GammaSearchOutcome, ScalarGrid, SolveStatus,
    SynthesisResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rrhoc",
    version,
    about = "Round-Robin H-infinity consensus observer synthesis and certification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Minimize γ (or use the configured γ) and write synthesis.json.
    Synthesize,
    /// Check the configured gains against the analysis conditions; writes analysis.json.
    Analyze,
    /// Simulate the observer network; writes trace.csv.
    Simulate,
    /// Judge a synthesis result over the disturbance battery; writes certification.json.
    Certify,
    /// γ_min against the uniform sampling step; writes sweep.csv.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Off => Self::Off,
            LogLevel::Error => Self::Error,
            LogLevel::Warn => Self::Warn,
            LogLevel::Info => Self::Info,
            LogLevel::Debug => Self::Debug,
            LogLevel::Trace => Self::Trace,
        }
    }
}

/// Exit code for an error that ends a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::Singular(_) | Error::NonAffine(_) => EXIT_FAIL,
        Error::BudgetExhausted(_) => EXIT_BUDGET,
        _ => EXIT_INVALID,
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .try_init();
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    setup: Setup,
    out_dir: PathBuf,
    seed: u64,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn network(&self, schedule: &crate::schedule::SamplingSchedule) -> Result<NetworkContext> {
        let taus = schedule.delay_bounds(&self.setup.graph)?;
        NetworkContext::new(&self.setup.model, &self.setup.graph, &taus)
    }

    /// Configured gains file, else `synthesis.json` in the output directory.
    fn gains_source(&self, field: Option<&PathBuf>) -> Result<PathBuf> {
        if let Some(p) = field {
            return Ok(self.setup.resolve(p));
        }
        let fallback = self.out_dir.join("synthesis.json");
        if fallback.exists() {
            Ok(fallback)
        } else {
            Err(Error::Config {
                path: "gains".into(),
                message: format!(
                    "not set and {} does not exist; run `synthesize` first",
                    fallback.display()
                ),
            })
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let setup = Setup::load(path)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| setup.config.output_dir.as_ref().map(|p| setup.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.unwrap_or(setup.config.seed);
    let ctx = Context {
        setup,
        out_dir,
        seed,
    };
    match cli.command {
        Command::Synthesize => cmd_synthesize(&ctx),
        Command::Analyze => cmd_analyze(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Certify => cmd_certify(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
    }
}

/// Bisection summary stored beside the synthesis result.
#[derive(Debug, Clone, Serialize)]
struct SearchSummary {
    gamma_min: f64,
    gamma_lo: f64,
    tolerance: f64,
    monotone: bool,
    probes: Vec<GammaProbe>,
}

#[derive(Debug, Clone, Serialize)]
struct SynthesisOutput<'a> {
    #[serde(flatten)]
    result: &'a SynthesisResult,
    gamma_search: Option<SearchSummary>,
}

fn run_synthesis(ctx: &Context) -> Result<(SynthesisResult, Option<GammaSearchOutcome>)> {
    let cfg = &ctx.setup.config;
    let net = ctx.network(&ctx.setup.schedule)?;
    match cfg.gamma {
        Some(g) => Ok((synthesize(&net, g, &cfg.grid, &cfg.budget)?, None)),
        None => {
            let out = minimize_gamma(&net, &cfg.grid, &cfg.budget, &cfg.gamma_search)?;
            Ok((out.result.clone(), Some(out)))
        }
    }
}

fn cmd_synthesize(ctx: &Context) -> Result<i32> {
    let (result, search) = run_synthesis(ctx)?;
    let summary = search.map(|s| SearchSummary {
        gamma_min: s.gamma_min,
        gamma_lo: s.gamma_lo,
        tolerance: ctx.setup.config.gamma_search.tolerance,
        monotone: s.monotone,
        probes: s.probes,
    });
    let path = ctx.write_json(
        "synthesis.json",
        &SynthesisOutput {
            result: &result,
            gamma_search: summary,
        },
    )?;
    println!(
        "gamma = {:.6}; analysis max eigenvalue {:.3e}; wrote {}",
        result.gamma,
        result.analysis_max_eigenvalue,
        path.display()
    );
    Ok(EXIT_OK)
}

fn cmd_analyze(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.setup.config;
    let source = ctx.gains_source(cfg.gains.as_ref())?;
    let (gains, file_gamma, result) = load_gains(&source)?;
    let gamma = cfg.gamma.or(file_gamma).ok_or_else(|| Error::Config {
        path: "gamma".into(),
        message: "required when the gains file carries no gamma".into(),
    })?;
    let net = ctx.network(&ctx.setup.schedule)?;
    // try the synthesized scalars first
    let mut report = None;
    if let Some(r) = &result {
        let first = ScalarGrid {
            alphas: vec![r.grid_point.alpha],
            pi_fractions: vec![r.grid_point.pi_fraction],
            epsilons: vec![1.0],
        };
        let rep = analyze(&net, &gains, gamma, &first, &cfg.budget)?;
        if rep.status == SolveStatus::Feasible {
            report = Some(rep);
        }
    }
    let report = match report {
        Some(r) => r,
        None => analyze(&net, &gains, gamma, &cfg.grid, &cfg.budget)?,
    };
    let path = ctx.write_json("analysis.json", &report)?;
    println!(
        "analysis at gamma = {gamma:.6}: {:?}; wrote {}",
        report.status,
        path.display()
    );
    Ok(match report.status {
        SolveStatus::Feasible => EXIT_OK,
        SolveStatus::InfeasibleWithinBudget => EXIT_FAIL,
        SolveStatus::BudgetExhausted => EXIT_BUDGET,
    })
}

fn configured_gains(ctx: &Context) -> Result<Vec<NodeGains>> {
    let cfg = &ctx.setup.config;
    let source = ctx.gains_source(cfg.gains.as_ref().or(cfg.result.as_ref()))?;
    Ok(load_gains(&source)?.0)
}

fn cmd_simulate(ctx: &Context) -> Result<i32> {
    let gains = configured_gains(ctx)?;
    let scenario = ctx.setup.simulation_scenario()?;
    let s = &ctx.setup;
    let trace = simulate(
        &s.model,
        &s.graph,
        &s.schedule,
        &gains,
        &scenario,
        s.config.simulation.dt,
    )?;
    let cost = disagreement_cost(&trace, &s.graph)?;
    let path = ctx.write("trace.csv", &trace.to_csv())?;
    let beta = decay_rate_estimate(&trace)?;
    println!(
        "J = {:.6e}; decay rate {}; wrote {}",
        cost.value(),
        if beta.is_finite() {
            format!("{beta:.4}")
        } else {
            "converged".into()
        },
        path.display()
    );
    Ok(EXIT_OK)
}

fn cmd_certify(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.setup.config;
    let stored = cfg
        .result
        .as_ref()
        .map(|p| ctx.setup.resolve(p))
        .or_else(|| Some(ctx.out_dir.join("synthesis.json")).filter(|p| p.exists()));
    let result = match stored {
        Some(path) => match load_gains(&path)?.2 {
            Some(r) => r,
            None => {
                return Err(Error::Config {
                    path: "result".into(),
                    message: format!(
                        "{} holds bare gains, not a synthesis report",
                        path.display()
                    ),
                })
            }
        },
        None => run_synthesis(ctx)?.0,
    };
    let battery = ctx.setup.battery(ctx.seed)?;
    let options = CertifyOptions {
        dt: cfg.simulation.dt,
        tolerance: cfg.certification.tolerance,
        lyapunov_stride: (cfg.certification.lyapunov_stride > 0)
            .then_some(cfg.certification.lyapunov_stride),
    };
    let s = &ctx.setup;
    let report = certify(&s.model, &s.graph, &s.schedule, &result, &battery, &options)?;
    let path = ctx.write_json("certification.json", &report)?;
    println!("{}; wrote {}", report.statement, path.display());
    Ok(if report.passed { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_sweep(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.setup.config;
    let mut csv = String::from(
        "h,tau_max,gamma_min,gamma_lo,probes,monotone,alpha,pi_fraction,epsilon,status\n",
    );
    let mut code = EXIT_OK;
    for &h in &cfg.sweep.steps {
        let schedule = ctx.setup.schedule_with_step(h)?;
        let net = ctx.network(&schedule)?;
        let tau_max = net.nodes().iter().map(|c| c.tau).fold(0.0, f64::max);
        match minimize_gamma(&net, &cfg.grid, &cfg.budget, &cfg.gamma_search) {
            Ok(o) => {
                let p = o.result.grid_point;
                let _ = writeln!(
                    csv,
                    "{h},{tau_max},{},{},{},{},{},{},{},feasible",
                    o.gamma_min,
                    o.gamma_lo,
                    o.probes.len(),
                    o.monotone,
                    p.alpha,
                    p.pi_fraction,
                    p.epsilon
                );
                println!("h = {h}: gamma_min = {:.6}", o.gamma_min);
            }
            Err(e @ (Error::Infeasible(_) | Error::BudgetExhausted(_))) => {
                let status = if matches!(e, Error::BudgetExhausted(_)) {
                    code = EXIT_BUDGET;
                    "budget_exhausted"
                } else {
                    if code == EXIT_OK {
                        code = EXIT_FAIL;
                    }
                    "infeasible"
                };
                let _ = writeln!(csv, "{h},{tau_max},,,,,,,,{status}");
                println!("h = {h}: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    let path = ctx.write("sweep.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(code)
}
