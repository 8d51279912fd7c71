use serde::Serialize;

use super::simulate::SimulationTrace;
use crate::error::{arg_err, dim_err, Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{is_symmetric, Mat};

/// Both quadratures of the disagreement cost `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisagreementCost {
    /// `(1/N)∫ Σ_i Σ_{j∈V_i} ‖e_j − e_i‖²`.
    pub pairwise: f64,
    /// `(1/N)∫ Σ_i [(p_i + q_i)‖e_i‖² − 2e_i'Σ_{j∈V_i} e_j]`.
    pub degree_form: f64,
}

impl DisagreementCost {
    pub fn value(&self) -> f64 {
        self.pairwise
    }
}

fn check_trace(trace: &SimulationTrace, graph: &DirectedGraph) -> Result<()> {
    if trace.len() < 2 {
        return Err(Error::Simulation(
            "trace holds fewer than two grid points".into(),
        ));
    }
    if trace.node_count() != graph.node_count() {
        return dim_err(format!(
            "trace has {} nodes, graph {}",
            trace.node_count(),
            graph.node_count()
        ));
    }
    Ok(())
}

/// Pairwise integrand at grid point `m`, before the `1/N` factor.
pub(crate) fn pairwise_integrand(trace: &SimulationTrace, graph: &DirectedGraph, m: usize) -> f64 {
    let e = &trace.e[m];
    (0..graph.node_count())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| (&e[j] - &e[i]).norm_squared())
                .sum::<f64>()
        })
        .sum()
}

fn degree_integrand(trace: &SimulationTrace, graph: &DirectedGraph, m: usize) -> f64 {
    let e = &trace.e[m];
    (0..graph.node_count())
        .map(|i| {
            let deg = (graph.in_degree(i) + graph.out_degree(i)) as f64;
            let cross: f64 = graph.neighbors(i).iter().map(|&j| e[i].dot(&e[j])).sum();
            deg * e[i].norm_squared() - 2.0 * cross
        })
        .sum()
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut prev = f(0);
    let mut total = 0.0;
    for m in 1..times.len() {
        let cur = f(m);
        total += 0.5 * (times[m] - times[m - 1]) * (prev + cur);
        prev = cur;
    }
    total
}

/// `J` over the trace horizon by the trapezoid rule, in both forms.
pub fn disagreement_cost(
    trace: &SimulationTrace,
    graph: &DirectedGraph,
) -> Result<DisagreementCost> {
    check_trace(trace, graph)?;
    let nodes = graph.node_count() as f64;
    Ok(DisagreementCost {
        pairwise: trapezoid(&trace.times, |m| pairwise_integrand(trace, graph, m)) / nodes,
        degree_form: trapezoid(&trace.times, |m| degree_integrand(trace, graph, m)) / nodes,
    })
}

/// `J / (x_0'Px_0 + (1/N)Σ_i‖ξ_i‖²₂)`.
pub fn performance_ratio(trace: &SimulationTrace, graph: &DirectedGraph, p: &Mat) -> Result<f64> {
    let j = disagreement_cost(trace, graph)?.value();
    ratio_from_parts(j, trace, p)
}

pub(crate) fn ratio_from_parts(j: f64, trace: &SimulationTrace, p: &Mat) -> Result<f64> {
    let n = trace.x0.len();
    if p.shape() != (n, n) {
        return dim_err(format!("P is {:?}, expected ({n}, {n})", p.shape()));
    }
    if !is_symmetric(p, 1e-9) {
        return arg_err("P is not symmetric");
    }
    let denom =
        trace.x0.dot(&(p * &trace.x0)) + trace.total_xi_energy() / trace.node_count() as f64;
    if !(denom > 0.0) {
        return arg_err("ratio undefined: x0 = 0 and no disturbance energy");
    }
    Ok(j / denom)
}

/// Least-squares slope `−β` of `log Σ_i‖e_i(t)‖` over the second half of
/// the horizon, using only points above the trace's rounding floor. Returns
/// `f64::INFINITY` ("converged") when the error is identically zero or has
/// sunk below the floor before the second half.
pub fn decay_rate_estimate(trace: &SimulationTrace) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::Simulation(
            "trace holds fewer than two grid points".into(),
        ));
    }
    let floor = trace.error_floor * trace.node_count() as f64;
    let norms: Vec<f64> = trace
        .e
        .iter()
        .map(|e| e.iter().map(|v| v.norm()).sum())
        .collect();
    if norms.iter().all(|&v| v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let half = 0.5 * trace.horizon();
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&norms)
        .filter(|(t, v)| **t >= half && **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(f64::INFINITY);
    }
    let count = pts.len() as f64;
    let (mt, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / count, b + y / count));
    let (sty, stt) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    if stt == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-sty / stt)
}

/// Error energy `∫Σ_i‖e_i‖²` over the last 10% of the horizon divided by
/// the total; above 1% the horizon is flagged as too short.
pub fn tail_energy_fraction(trace: &SimulationTrace) -> f64 {
    let f = |m: usize| trace.e[m].iter().map(|v| v.norm_squared()).sum::<f64>();
    let total = trapezoid(&trace.times, f);
    if total == 0.0 {
        return 0.0;
    }
    let cut = 0.9 * trace.horizon();
    let start = trace.times.partition_point(|&t| t < cut);
    let tail = trapezoid(&trace.times[start..], |m| f(m + start));
    tail / total
}

pub const HORIZON_TAIL_LIMIT: f64 = 0.01;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eye, zeros, Vector};
    use crate::observer::testutil::{ring3, synthetic_trace};
    use crate::observer::{simulate, simulate_error_dynamics};
    use crate::plant::Scenario;
    use crate::schedule::SamplingSchedule;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(len: usize, step: f64) -> Vec<f64> {
        (0..len).map(|m| m as f64 * step).collect()
    }

    fn constant_trace(values: &[Vector], graph: &DirectedGraph) -> SimulationTrace {
        let times = grid(11, 0.1);
        let e = vec![values.to_vec(); times.len()];
        let zero = vec![vec![Vector::zeros(values[0].len()); values.len()]; times.len()];
        synthetic_trace(times, e, zero, 5, graph)
    }

    #[test]
    fn identical_estimates_cost_nothing() {
        let graph = DirectedGraph::ring(3).unwrap();
        let c = Vector::from_vec(vec![0.3, -2.0]);
        let j =
            disagreement_cost(&constant_trace(&[c.clone(), c.clone(), c], &graph), &graph).unwrap();
        assert!(j.pairwise.abs() < 1e-15 && j.degree_form.abs() < 1e-14);
    }

    #[test]
    fn opposite_constants_on_a_pair() {
        let graph = DirectedGraph::ring(2).unwrap();
        let c = Vector::from_vec(vec![1.0, 2.0]);
        let tr = constant_trace(&[c.clone(), -&c], &graph);
        let j = disagreement_cost(&tr, &graph).unwrap();
        let want = 4.0 * c.norm_squared();
        assert!((j.pairwise - want).abs() < 1e-12, "{}", j.pairwise);
        assert!((j.degree_form - want).abs() < 1e-12, "{}", j.degree_form);
    }

    #[test]
    fn both_forms_agree_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let graph =
            DirectedGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 1)]).unwrap();
        for _ in 0..20 {
            let times = grid(50, 0.02);
            let e: Vec<Vec<Vector>> = (0..50)
                .map(|_| {
                    (0..4)
                        .map(|_| Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let tr = synthetic_trace(times, e.clone(), e, 10, &graph);
            let j = disagreement_cost(&tr, &graph).unwrap();
            assert!((j.pairwise - j.degree_form).abs() < 1e-12 * j.pairwise.max(1.0));
        }
    }

    #[test]
    fn ratio_edge_cases() {
        let graph = DirectedGraph::ring(2).unwrap();
        let zero = constant_trace(&[Vector::zeros(2), Vector::zeros(2)], &graph);
        let mut undefined = zero.clone();
        undefined.x0 = Vector::zeros(2);
        assert!(performance_ratio(&undefined, &graph, &eye(2)).is_err());
        let mut clean = zero;
        clean.x0 = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(performance_ratio(&clean, &graph, &eye(2)).unwrap(), 0.0);
        let mut skew = eye(2);
        skew[(0, 1)] = 0.5;
        assert!(performance_ratio(&clean, &graph, &skew).is_err());
        assert!(performance_ratio(&clean, &graph, &eye(3)).is_err());
    }

    #[test]
    fn decay_of_a_pure_exponential() {
        let graph = DirectedGraph::ring(2).unwrap();
        let times = grid(401, 0.05);
        let c = Vector::from_vec(vec![1.0, -3.0]);
        let e: Vec<Vec<Vector>> = times
            .iter()
            .map(|t| vec![&c * (-0.7 * t).exp(), &c * (-0.7 * t).exp()])
            .collect();
        let tr = synthetic_trace(times, e.clone(), e, 10, &graph);
        assert!((decay_rate_estimate(&tr).unwrap() - 0.7).abs() < 1e-10);
        let zero = constant_trace(&[Vector::zeros(2), Vector::zeros(2)], &graph);
        assert_eq!(decay_rate_estimate(&zero).unwrap(), f64::INFINITY);
    }

    #[test]
    fn isolated_observers_decay_at_the_slowest_mode() {
        let (model, graph, mut gains) = ring3();
        for g in &mut gains {
            g.k = zeros(2, 2);
        }
        let slowest = (0..3)
            .map(|i| {
                let acl = model.plant().a() - &gains[i].l * model.node(i).c();
                acl.complex_eigenvalues()
                    .iter()
                    .map(|z| z.re)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let schedule = SamplingSchedule::uniform(0.1, 20.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate_error_dynamics(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let beta = decay_rate_estimate(&tr).unwrap();
        assert!(
            (beta + slowest).abs() <= 0.1 * slowest.abs(),
            "beta {beta}, abscissa {slowest}"
        );
    }

    #[test]
    fn flipped_output_injection_grows() {
        let (model, graph, mut gains) = ring3();
        for g in &mut gains {
            g.l = -&g.l;
        }
        let schedule = SamplingSchedule::uniform(0.1, 10.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        assert!(decay_rate_estimate(&tr).unwrap() < 0.0);
        assert!(tail_energy_fraction(&tr) > HORIZON_TAIL_LIMIT);
    }

    #[test]
    fn tail_fraction_of_a_decaying_trace() {
        let graph = DirectedGraph::ring(2).unwrap();
        let times = grid(1001, 0.01);
        let e: Vec<Vec<Vector>> = times
            .iter()
            .map(|t| vec![Vector::from_vec(vec![(-t).exp()]), Vector::zeros(1)])
            .collect();
        let tr = synthetic_trace(times, e.clone(), e, 10, &graph);
        // ∫_9^10 e^{−2t} / ∫_0^10 e^{−2t}
        let want = ((-18.0f64).exp() - (-20.0f64).exp()) / (1.0 - (-20.0f64).exp());
        assert!((tail_energy_fraction(&tr) - want).abs() < 1e-4 * want);
    }
}
