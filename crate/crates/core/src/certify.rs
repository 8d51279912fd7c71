//! End-to-end check of a synthesis result by simulation: exponential decay
//! of the unperturbed errors and the performance ratio over a disturbance
//! battery. Sampling a battery cannot prove the supremum bound; a passing
//! report only states that no violation was found.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg_err, Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{serde_rows, Mat};
use crate::lmi::NetworkContext;
use crate::observer::{
    decay_rate_estimate, default_check_times, disagreement_cost, lyapunov_diagnostic, simulate,
    simulate_error_dynamics, tail_energy_fraction, SimulationTrace, DIAGNOSTIC_TOLERANCE,
    HORIZON_TAIL_LIMIT,
};
use crate::plant::{NetworkModel, Scenario};
use crate::schedule::SamplingSchedule;
use crate::solver::{recheck_analysis, xi_max_eigenvalue, SynthesisResult};

/// Slack on delays when comparing the schedule to the certified `τ_i`.
const DELAY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub dt: f64,
    /// Relative slack on `γ²`.
    pub tolerance: f64,
    /// Lyapunov check at every `stride`-th sampling interval; `None` skips
    /// the diagnostic.
    pub lyapunov_stride: Option<usize>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            tolerance: 0.05,
            lyapunov_stride: Some(10),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub unperturbed: bool,
    pub cost: f64,
    /// `x_0'Px_0 + (1/N)Σ_i‖ξ_i‖²₂`.
    pub denominator: f64,
    pub ratio: f64,
    /// Error energy share of the last 10% of the horizon.
    pub tail_fraction: f64,
    pub horizon_adequate: bool,
    /// Ratio within `γ²(1 + tolerance)` and horizon adequate.
    pub passed: bool,
    /// Decay fit on the error-coordinate trace; `None` when the errors
    /// reached the rounding floor ("converged"). Unperturbed scenarios only.
    pub decay_rate: Option<f64>,
    /// `Σ_i‖e_i(T)‖ / Σ_i‖e_i(0)‖`. Unperturbed scenarios only.
    pub final_error_ratio: Option<f64>,
    pub lyapunov_max_violation: Option<f64>,
    pub lyapunov_passed: Option<bool>,
}

/// Clause (i): exponential decay of the unperturbed errors.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityClause {
    /// Smallest decay rate over the unperturbed scenarios; `None` when all
    /// converged to the rounding floor.
    pub decay_rate: Option<f64>,
    pub converged: bool,
    pub worst_final_error_ratio: f64,
    pub passed: bool,
}

/// Clause (ii): the performance bound over the battery.
#[derive(Debug, Clone, Serialize)]
pub struct PerformanceClause {
    pub bound: f64,
    pub max_ratio: f64,
    pub passed: bool,
    /// Scenarios whose horizon was too short to judge.
    pub horizon_flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSummary {
    pub checks: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    /// The dissipation inequality is sufficient only; this does not gate
    /// the report.
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub gamma: f64,
    #[serde(with = "serde_rows")]
    pub p_matrix: Mat,
    pub tolerance: f64,
    pub dt: f64,
    pub analysis_verified: bool,
    pub analysis_max_eigenvalue: f64,
    pub stability: StabilityClause,
    pub performance: PerformanceClause,
    pub lyapunov: Option<LyapunovSummary>,
    pub scenarios: Vec<ScenarioOutcome>,
    pub passed: bool,
    pub statement: String,
}

fn validate(
    model: &NetworkModel,
    graph: &DirectedGraph,
    schedule: &SamplingSchedule,
    result: &SynthesisResult,
    battery: &[Scenario],
    options: &CertifyOptions,
) -> Result<NetworkContext> {
    if battery.is_empty() {
        return arg_err("empty scenario battery");
    }
    if !battery
        .iter()
        .any(|s| s.is_unperturbed() && s.x0.norm() > 0.0)
    {
        return arg_err("battery needs a scenario with x0 != 0 and no disturbance");
    }
    if !(options.tolerance >= 0.0) {
        return arg_err(format!(
            "tolerance must be nonnegative, got {}",
            options.tolerance
        ));
    }
    if result.taus.len() != model.node_count() {
        return Err(Error::Dimension(format!(
            "result covers {} nodes, model has {}",
            result.taus.len(),
            model.node_count()
        )));
    }
    let actual = schedule.delay_bounds(graph)?;
    for (i, (&a, &c)) in actual.iter().zip(&result.taus).enumerate() {
        if a > c * (1.0 + DELAY_SLACK) + DELAY_SLACK {
            return arg_err(format!(
                "node {}: schedule delay {a} exceeds the certified delay {c}",
                i + 1
            ));
        }
    }
    NetworkContext::new(model, graph, &result.taus)
}

fn error_sum(trace: &SimulationTrace, m: usize) -> f64 {
    trace.e[m].iter().map(|v| v.norm()).sum()
}

/// Simulates every scenario with the result's gains and judges both
/// clauses. Scenarios run in parallel; the report lists them in battery
/// order.
pub fn certify(
    model: &NetworkModel,
    graph: &DirectedGraph,
    schedule: &SamplingSchedule,
    result: &SynthesisResult,
    battery: &[Scenario],
    options: &CertifyOptions,
) -> Result<CertificationReport> {
    let net = validate(model, graph, schedule, result, battery, options)?;
    let recheck = recheck_analysis(&net, result)?;
    let gamma2 = result.gamma * result.gamma;
    let bound = gamma2 * (1.0 + options.tolerance);
    let nodes = model.node_count() as f64;

    let scenarios: Vec<ScenarioOutcome> = battery
        .par_iter()
        .map(|sc| -> Result<ScenarioOutcome> {
            let trace = simulate(model, graph, schedule, &result.gains, sc, options.dt)?;
            let cost = disagreement_cost(&trace, graph)?.value();
            let p = &result.p_matrix;
            let denominator = sc.x0.dot(&(p * &sc.x0)) + trace.total_xi_energy() / nodes;
            if !(denominator > 0.0) {
                return arg_err(format!("scenario `{}`: x0 = 0 and no disturbance", sc.name));
            }
            let ratio = cost / denominator;
            let tail_fraction = tail_energy_fraction(&trace);
            let horizon_adequate = tail_fraction <= HORIZON_TAIL_LIMIT;
            let unperturbed = sc.is_unperturbed();
            let needs_error_trace = unperturbed || options.lyapunov_stride.is_some();
            let fine = if needs_error_trace {
                Some(simulate_error_dynamics(
                    model,
                    graph,
                    schedule,
                    &result.gains,
                    sc,
                    options.dt,
                )?)
            } else {
                None
            };
            let (mut decay_rate, mut final_error_ratio) = (None, None);
            if let (true, Some(fine)) = (unperturbed, &fine) {
                let beta = decay_rate_estimate(fine)?;
                decay_rate = beta.is_finite().then_some(beta);
                let start = error_sum(fine, 0);
                if start > 0.0 {
                    final_error_ratio = Some(error_sum(fine, fine.len() - 1) / start);
                }
            }
            let (mut lyapunov_max_violation, mut lyapunov_passed) = (None, None);
            if let (Some(stride), Some(fine)) = (options.lyapunov_stride, &fine) {
                let times = default_check_times(fine, &result.taus, stride);
                if !times.is_empty() {
                    let rep = lyapunov_diagnostic(
                        fine,
                        graph,
                        &result.certificates,
                        &result.taus,
                        result.gamma,
                        &times,
                    )?;
                    lyapunov_max_violation = Some(rep.max_violation);
                    lyapunov_passed = Some(rep.passed);
                }
            }
            Ok(ScenarioOutcome {
                name: sc.name.clone(),
                unperturbed,
                cost,
                denominator,
                ratio,
                tail_fraction,
                horizon_adequate,
                passed: ratio <= bound && horizon_adequate,
                decay_rate,
                final_error_ratio,
                lyapunov_max_violation,
                lyapunov_passed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let stable: Vec<&ScenarioOutcome> = scenarios
        .iter()
        .filter(|s| s.unperturbed && s.final_error_ratio.is_some())
        .collect();
    let finite_rates: Vec<f64> = stable.iter().filter_map(|s| s.decay_rate).collect();
    let decay_rate = finite_rates.iter().copied().reduce(f64::min);
    let stability = StabilityClause {
        decay_rate,
        converged: finite_rates.is_empty(),
        worst_final_error_ratio: stable
            .iter()
            .filter_map(|s| s.final_error_ratio)
            .fold(0.0, f64::max),
        passed: decay_rate.is_none_or(|b| b > 0.0),
    };
    let performance = PerformanceClause {
        bound,
        max_ratio: scenarios.iter().map(|s| s.ratio).fold(0.0, f64::max),
        passed: scenarios.iter().all(|s| s.passed),
        horizon_flags: scenarios
            .iter()
            .filter(|s| !s.horizon_adequate)
            .map(|s| s.name.clone())
            .collect(),
    };
    let lyapunov = options.lyapunov_stride.map(|_| {
        let violations: Vec<f64> = scenarios
            .iter()
            .filter_map(|s| s.lyapunov_max_violation)
            .collect();
        LyapunovSummary {
            checks: violations.len(),
            max_violation: violations.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            tolerance: DIAGNOSTIC_TOLERANCE,
            passed: scenarios.iter().all(|s| s.lyapunov_passed != Some(false)),
        }
    });
    let passed = recheck.passed && stability.passed && performance.passed;
    let statement = statement(&scenarios, recheck.passed, &stability, &performance);
    Ok(CertificationReport {
        gamma: result.gamma,
        p_matrix: result.p_matrix.clone(),
        tolerance: options.tolerance,
        dt: options.dt,
        analysis_verified: recheck.passed,
        analysis_max_eigenvalue: xi_max_eigenvalue(&recheck),
        stability,
        performance,
        lyapunov,
        scenarios,
        passed,
        statement,
    })
}

fn statement(
    scenarios: &[ScenarioOutcome],
    analysis: bool,
    stability: &StabilityClause,
    performance: &PerformanceClause,
) -> String {
    let mut problems = Vec::new();
    if !analysis {
        problems.push("analysis conditions fail at the stored certificate".to_string());
    }
    if !stability.passed {
        problems.push(format!(
            "unperturbed errors grow (decay rate {:.4})",
            stability.decay_rate.unwrap_or(f64::NAN)
        ));
    }
    let over: Vec<&str> = scenarios
        .iter()
        .filter(|s| s.ratio > performance.bound)
        .map(|s| s.name.as_str())
        .collect();
    if !over.is_empty() {
        problems.push(format!("ratio above bound in {}", over.join(", ")));
    }
    if !performance.horizon_flags.is_empty() {
        problems.push(format!(
            "horizon too short for {}",
            performance.horizon_flags.join(", ")
        ));
    }
    if problems.is_empty() {
        format!(
            "no violation found over battery of {} scenarios",
            scenarios.len()
        )
    } else {
        format!("certification failed: {}", problems.join("; "))
    }
}
