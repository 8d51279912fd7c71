//! Grid search over the scalars `α, π, ε, ε̄` and bisection on `γ`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::families::{AnalysisFamily, NodeScalars, SynthesisFamily};
use super::problem::{compile, LmiFamily, SolveStatus, SolverBudget, VerificationReport};
use crate::error::{arg_err, Error, Result};
use crate::linalg::{condition_number, eig_extremes, serde_rows, sym2, Mat};
use crate::lmi::{initial_state_weight, recover_gains, NetworkContext, NodeCertificate, NodeGains};

/// Candidate scalars shared by every node. `π_i = c·2α/q_i` for each
/// fraction `c ∈ [0, 1)`, and `ε_i = ε̄_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarGrid {
    pub alphas: Vec<f64>,
    pub pi_fractions: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl Default for ScalarGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.5, 1.0, 2.0],
            pi_fractions: vec![0.0, 0.25, 0.5],
            epsilons: vec![0.1, 0.5, 1.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub pi_fraction: f64,
    pub epsilon: f64,
}

impl GridPoint {
    pub fn node_scalars(&self, net: &NetworkContext) -> Vec<NodeScalars> {
        net.nodes()
            .iter()
            .map(|ctx| NodeScalars {
                alpha: self.alpha,
                pi: if ctx.out_degree == 0 {
                    0.0
                } else {
                    self.pi_fraction * 2.0 * self.alpha / ctx.out_degree as f64
                },
                eps: self.epsilon,
                eps_bar: self.epsilon,
            })
            .collect()
    }
}

impl ScalarGrid {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.pi_fractions.is_empty() || self.epsilons.is_empty() {
            return arg_err("scalar grid has an empty axis");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return arg_err(format!("grid alpha {a} is not positive"));
        }
        if let Some(c) = self
            .pi_fractions
            .iter()
            .find(|c| !(**c >= 0.0 && **c < 1.0))
        {
            return arg_err(format!("grid pi fraction {c} is outside [0, 1)"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return arg_err(format!("grid epsilon {e} is not positive"));
        }
        Ok(())
    }

    /// All points, `α` outermost and `ε` innermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &pi_fraction in &self.pi_fractions {
                for &epsilon in &self.epsilons {
                    out.push(GridPoint {
                        alpha,
                        pi_fraction,
                        epsilon,
                    });
                }
            }
        }
        out
    }

    /// Points with distinct `(α, π)`, for the analysis problem.
    pub fn analysis_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &pi_fraction in &self.pi_fractions {
                out.push(GridPoint {
                    alpha,
                    pi_fraction,
                    epsilon: 1.0,
                });
            }
        }
        out
    }
}

/// Gains and certificates from a feasible synthesis problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub gamma: f64,
    pub grid_point: GridPoint,
    pub scalars: Vec<NodeScalars>,
    pub taus: Vec<f64>,
    pub gains: Vec<NodeGains>,
    pub certificates: Vec<NodeCertificate>,
    #[serde(with = "serde_rows::vec")]
    pub slack_x: Vec<Mat>,
    /// Initial-state weight of the performance bound.
    #[serde(with = "serde_rows")]
    pub p_matrix: Mat,
    /// Optimal margin `t*` of the solve.
    pub margin: f64,
    /// Largest eigenvalue over every `Ξ̄_i` and `−Ŷ_i`.
    pub synthesis_max_eigenvalue: f64,
    /// Largest eigenvalue over every `Ξ_i` re-evaluated with the recovered
    /// gains.
    pub analysis_max_eigenvalue: f64,
    pub slack_condition: Vec<f64>,
}

/// Result of one grid point.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub point: GridPoint,
    pub status: SolveStatus,
    pub margin: f64,
    pub note: Option<String>,
    pub result: Option<SynthesisResult>,
}

fn evaluate_in_order<T, F>(points: &[GridPoint], eval: F) -> (Option<T>, Vec<PointOutcome>)
where
    T: Send,
    F: Fn(&GridPoint) -> (PointOutcome, Option<T>) + Sync,
{
    let chunk = rayon::current_num_threads().max(1);
    let mut log = Vec::new();
    for batch in points.chunks(chunk) {
        let results: Vec<_> = batch.par_iter().map(&eval).collect();
        let mut found = None;
        for (outcome, value) in results {
            let hit = value.is_some();
            log.push(outcome);
            if hit {
                found = value;
                break;
            }
        }
        if found.is_some() {
            return (found, log);
        }
    }
    (None, log)
}

fn failure_error(what: &str, log: &[PointOutcome]) -> Error {
    let best = log
        .iter()
        .map(|o| o.margin)
        .filter(|m| m.is_finite())
        .fold(f64::INFINITY, f64::min);
    let exhausted = log
        .iter()
        .filter(|o| o.status == SolveStatus::BudgetExhausted)
        .count();
    let msg = format!(
        "{what}: none of {} grid points feasible (best margin {best:.3e}, {exhausted} budget-exhausted)",
        log.len()
    );
    if exhausted > 0 {
        Error::BudgetExhausted(msg)
    } else {
        Error::Infeasible(msg)
    }
}

fn try_synthesis_point(
    net: &NetworkContext,
    gamma: f64,
    point: &GridPoint,
    budget: &SolverBudget,
) -> Result<PointOutcome> {
    let scalars = point.node_scalars(net);
    let family = Arc::new(SynthesisFamily::new(net.clone(), scalars.clone(), gamma)?);
    let problem = compile(family.clone())?;
    let out = problem.solve_feasibility(budget);
    let mut outcome = PointOutcome {
        point: *point,
        status: out.status,
        margin: out.margin,
        note: None,
        result: None,
    };
    if out.status != SolveStatus::Feasible {
        return Ok(outcome);
    }
    let values = out.values.expect("feasible outcome carries values");
    let report = out.verification.expect("feasible outcome carries a report");
    let vars = family.decode(&values);

    let mut gains = Vec::with_capacity(net.len());
    let mut cond = Vec::with_capacity(net.len());
    for i in 0..net.len() {
        let x = &vars.x[i];
        if eig_extremes(&sym2(x)).0 <= 0.0 {
            outcome.status = SolveStatus::InfeasibleWithinBudget;
            outcome.note = Some(format!("X{} + X{}' not positive definite", i + 1, i + 1));
            return Ok(outcome);
        }
        cond.push(condition_number(x));
        match recover_gains(x, &vars.f[i], &vars.u[i]) {
            Ok((k, l)) => gains.push(NodeGains { k, l }),
            Err(e) => {
                outcome.status = SolveStatus::InfeasibleWithinBudget;
                outcome.note = Some(format!("node {}: {e}", i + 1));
                return Ok(outcome);
            }
        }
    }

    let analysis = AnalysisFamily::new(net.clone(), gains.clone(), scalars.clone(), gamma)?;
    let ax = analysis.encode_from_synthesis(&vars, &scalars);
    let recheck = super::problem::check_constraints(&analysis.evaluate(&ax)?);
    if !recheck.passed {
        outcome.status = SolveStatus::InfeasibleWithinBudget;
        outcome.note = Some(format!(
            "analysis re-check failed at {}",
            recheck.offending().map(|c| c.name.as_str()).unwrap_or("?")
        ));
        return Ok(outcome);
    }

    let taus: Vec<f64> = net.nodes().iter().map(|c| c.tau).collect();
    let p_matrix = initial_state_weight(&vars.certificates, &taus)?;
    outcome.result = Some(SynthesisResult {
        gamma,
        grid_point: *point,
        scalars,
        taus,
        gains,
        certificates: vars.certificates,
        slack_x: vars.x,
        p_matrix,
        margin: out.margin,
        synthesis_max_eigenvalue: report.worst_strict(),
        analysis_max_eigenvalue: xi_worst(&recheck),
        slack_condition: cond,
    });
    Ok(outcome)
}

/// Re-evaluates the analysis conditions at a stored synthesis result: its
/// gains, scalars and certificates, with `Z = εX`, `Q = ε̄X`. Every node must
/// have been synthesized for the delays in `net`.
pub fn recheck_analysis(
    net: &NetworkContext,
    result: &SynthesisResult,
) -> Result<VerificationReport> {
    let n = net.state_dim();
    let shapes_ok = result.certificates.len() == net.len()
        && result.slack_x.len() == net.len()
        && result.slack_x.iter().all(|x| x.shape() == (n, n));
    if !shapes_ok {
        return Err(Error::Dimension(format!(
            "result holds {} certificates and {} slacks for {} nodes of dimension {n}",
            result.certificates.len(),
            result.slack_x.len(),
            net.len()
        )));
    }
    for (ctx, c) in net.nodes().iter().zip(&result.certificates) {
        c.validate(n, ctx.out_degree)?;
    }
    let family = AnalysisFamily::new(
        net.clone(),
        result.gains.clone(),
        result.scalars.clone(),
        result.gamma,
    )?;
    let x = family.encode_certificate(&result.certificates, &result.slack_x, &result.scalars);
    Ok(super::problem::check_constraints(&family.evaluate(&x)?))
}

/// Largest `λ_max(Ξ_i)` in a verification report.
pub fn xi_max_eigenvalue(report: &VerificationReport) -> f64 {
    xi_worst(report)
}

fn xi_worst(report: &VerificationReport) -> f64 {
    report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("Xi"))
        .map(|c| c.lambda_max)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// First grid point, in [`ScalarGrid::points`] order, whose joint synthesis
/// problem at `γ` is feasible and passes every post-check.
pub fn synthesize(
    net: &NetworkContext,
    gamma: f64,
    grid: &ScalarGrid,
    budget: &SolverBudget,
) -> Result<SynthesisResult> {
    synthesize_logged(net, gamma, grid, budget).0
}

/// [`synthesize`] together with the per-point outcomes that were evaluated.
pub fn synthesize_logged(
    net: &NetworkContext,
    gamma: f64,
    grid: &ScalarGrid,
    budget: &SolverBudget,
) -> (Result<SynthesisResult>, Vec<PointOutcome>) {
    if let Err(e) = grid.validate() {
        return (Err(e), Vec::new());
    }
    let points = grid.points();
    let first_error = std::sync::Mutex::new(None);
    let (found, log) = evaluate_in_order(&points, |p| {
        match try_synthesis_point(net, gamma, p, budget) {
            Ok(mut o) => {
                let r = o.result.take();
                (o, r)
            }
            Err(e) => {
                let note = e.to_string();
                first_error.lock().unwrap().get_or_insert(e);
                (
                    PointOutcome {
                        point: *p,
                        status: SolveStatus::InfeasibleWithinBudget,
                        margin: f64::NAN,
                        note: Some(note),
                        result: None,
                    },
                    None,
                )
            }
        }
    });
    for o in &log {
        log::debug!(
            "gamma {gamma:.6}: alpha {} pi_fraction {} eps {} -> {:?} (t* = {:.3e}){}",
            o.point.alpha,
            o.point.pi_fraction,
            o.point.epsilon,
            o.status,
            o.margin,
            o.note
                .as_deref()
                .map(|n| format!(", {n}"))
                .unwrap_or_default()
        );
    }
    match found {
        Some(r) => (Ok(r), log),
        None => {
            if let Some(e) = first_error.into_inner().unwrap() {
                if log.iter().all(|o| o.margin.is_nan()) {
                    return (Err(e), log);
                }
            }
            (
                Err(failure_error(&format!("synthesis at gamma {gamma}"), &log)),
                log,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSearch {
    /// First probe; doubled until feasible.
    pub start: f64,
    /// Absolute width of the final bracket.
    pub tolerance: f64,
    pub cap: f64,
}

impl Default for GammaSearch {
    fn default() -> Self {
        Self {
            start: 1.0,
            tolerance: 0.05,
            cap: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaProbe {
    pub gamma: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaSearchOutcome {
    /// Smallest feasible probe.
    pub gamma_min: f64,
    /// Largest probe below `gamma_min` that failed (0 if none).
    pub gamma_lo: f64,
    pub probes: Vec<GammaProbe>,
    /// No failed probe lies above a feasible one.
    pub monotone: bool,
    pub result: SynthesisResult,
}

/// Doubling from `search.start` until feasible, then bisection on
/// `[γ_lo, γ_hi]` until `γ_hi − γ_lo ≤ tolerance`, with `γ_lo = 0` when
/// the first probe succeeds.
pub fn minimize_gamma(
    net: &NetworkContext,
    grid: &ScalarGrid,
    budget: &SolverBudget,
    search: &GammaSearch,
) -> Result<GammaSearchOutcome> {
    if !(search.start > 0.0 && search.tolerance > 0.0 && search.cap >= search.start) {
        return arg_err(format!(
            "gamma search needs start > 0, tolerance > 0 and cap >= start, got {search:?}"
        ));
    }
    let mut probes = Vec::new();
    let probe = |gamma: f64, probes: &mut Vec<GammaProbe>| -> Result<Option<SynthesisResult>> {
        match synthesize(net, gamma, grid, budget) {
            Ok(r) => {
                log::info!("gamma probe {gamma:.6}: feasible at {:?}", r.grid_point);
                probes.push(GammaProbe {
                    gamma,
                    status: SolveStatus::Feasible,
                });
                Ok(Some(r))
            }
            Err(Error::Infeasible(_)) => {
                log::info!("gamma probe {gamma:.6}: infeasible within budget");
                probes.push(GammaProbe {
                    gamma,
                    status: SolveStatus::InfeasibleWithinBudget,
                });
                Ok(None)
            }
            Err(Error::BudgetExhausted(_)) => {
                log::info!("gamma probe {gamma:.6}: budget exhausted");
                probes.push(GammaProbe {
                    gamma,
                    status: SolveStatus::BudgetExhausted,
                });
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };

    let mut lo = 0.0;
    let mut gamma = search.start;
    let mut best = loop {
        if let Some(r) = probe(gamma, &mut probes)? {
            break r;
        }
        lo = gamma;
        gamma *= 2.0;
        if gamma > search.cap {
            let exhausted = probes
                .iter()
                .any(|p| p.status == SolveStatus::BudgetExhausted);
            let msg = format!("no feasible gamma up to cap {}", search.cap);
            return Err(if exhausted {
                Error::BudgetExhausted(msg)
            } else {
                Error::Infeasible(msg)
            });
        }
    };
    let mut hi = gamma;
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        match probe(mid, &mut probes)? {
            Some(r) => {
                hi = mid;
                best = r;
            }
            None => lo = mid,
        }
    }
    let monotone = is_monotone(&probes);
    if !monotone {
        log::warn!("gamma probes are not monotone: {probes:?}");
    }
    Ok(GammaSearchOutcome {
        gamma_min: hi,
        gamma_lo: lo,
        probes,
        monotone,
        result: best,
    })
}

/// No failed probe at a `γ` above some feasible probe.
pub fn is_monotone(probes: &[GammaProbe]) -> bool {
    let min_feasible = probes
        .iter()
        .filter(|p| p.status == SolveStatus::Feasible)
        .map(|p| p.gamma)
        .fold(f64::INFINITY, f64::min);
    probes
        .iter()
        .all(|p| p.status == SolveStatus::Feasible || p.gamma < min_feasible)
}

/// Outcome of checking given gains against the analysis conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub gamma: f64,
    pub status: SolveStatus,
    pub grid_point: Option<GridPoint>,
    pub scalars: Option<Vec<NodeScalars>>,
    pub certificates: Option<Vec<NodeCertificate>>,
    #[serde(with = "option_rows", default)]
    pub p_matrix: Option<Mat>,
    /// Largest eigenvalue over every `Ξ_i` at the certificate.
    pub max_eigenvalue: Option<f64>,
    pub points_tried: usize,
    /// Lowest margin reached when no point is feasible.
    pub best_margin: f64,
}

mod option_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{from_rows, to_rows, Mat};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|r| from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Scalars, certificates and margin of a feasible analysis point.
type AnalysisHit = (Vec<NodeScalars>, Vec<NodeCertificate>, f64);

/// Searches `(α, π)` for a certificate of the analysis conditions with the
/// given gains.
pub fn analyze(
    net: &NetworkContext,
    gains: &[NodeGains],
    gamma: f64,
    grid: &ScalarGrid,
    budget: &SolverBudget,
) -> Result<AnalysisReport> {
    grid.validate()?;
    let points = grid.analysis_points();
    // surface dimension errors before fanning out
    AnalysisFamily::new(
        net.clone(),
        gains.to_vec(),
        points[0].node_scalars(net),
        gamma,
    )?;
    let (found, log) = evaluate_in_order(&points, |p| {
        let scalars = p.node_scalars(net);
        let run = || -> Result<(PointOutcome, Option<AnalysisHit>)> {
            let family = Arc::new(AnalysisFamily::new(
                net.clone(),
                gains.to_vec(),
                scalars.clone(),
                gamma,
            )?);
            let problem = compile(family.clone())?;
            let out = problem.solve_feasibility(budget);
            let outcome = PointOutcome {
                point: *p,
                status: out.status,
                margin: out.margin,
                note: None,
                result: None,
            };
            if out.status != SolveStatus::Feasible {
                return Ok((outcome, None));
            }
            let vars = family.decode(out.values.as_ref().unwrap());
            let worst = xi_worst(out.verification.as_ref().unwrap());
            Ok((outcome, Some((scalars.clone(), vars.certificates, worst))))
        };
        run().unwrap_or_else(|e| {
            (
                PointOutcome {
                    point: *p,
                    status: SolveStatus::InfeasibleWithinBudget,
                    margin: f64::NAN,
                    note: Some(e.to_string()),
                    result: None,
                },
                None,
            )
        })
    });
    let best_margin = log
        .iter()
        .map(|o| o.margin)
        .filter(|m| m.is_finite())
        .fold(f64::INFINITY, f64::min);
    let points_tried = log.len();
    Ok(match found {
        Some((scalars, certs, worst)) => {
            let point = log.last().map(|o| o.point);
            let taus: Vec<f64> = net.nodes().iter().map(|c| c.tau).collect();
            let p_matrix = initial_state_weight(&certs, &taus)?;
            AnalysisReport {
                gamma,
                status: SolveStatus::Feasible,
                grid_point: point,
                scalars: Some(scalars),
                certificates: Some(certs),
                p_matrix: Some(p_matrix),
                max_eigenvalue: Some(worst),
                points_tried,
                best_margin,
            }
        }
        None => {
            let exhausted = log.iter().any(|o| o.status == SolveStatus::BudgetExhausted);
            AnalysisReport {
                gamma,
                status: if exhausted {
                    SolveStatus::BudgetExhausted
                } else {
                    SolveStatus::InfeasibleWithinBudget
                },
                grid_point: None,
                scalars: None,
                certificates: None,
                p_matrix: None,
                max_eigenvalue: None,
                points_tried,
                best_margin,
            }
        }
    })
}
