//! Trajectory-level check of the dissipation inequality behind the
//! certificate. The inequality is sufficient, not necessary, so a violation
//! here is advisory.

use serde::Serialize;

use super::simulate::SimulationTrace;
use crate::error::{arg_err, dim_err, Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{Mat, Vector};
use crate::lmi::{NodeCertificate, WIRTINGER};

/// Relative tolerance on the inequality's left side.
pub const DIAGNOSTIC_TOLERANCE: f64 = 1e-6;

/// `(π²/4)(u − z)'W(u − z)`.
pub fn supply_rate(w: &Mat, u: &Vector, z: &Vector) -> Result<f64> {
    if w.shape() != (u.len(), u.len()) || z.len() != u.len() {
        return dim_err(format!(
            "W is {:?}, u has {}, z has {}",
            w.shape(),
            u.len(),
            z.len()
        ));
    }
    let d = u - z;
    Ok(WIRTINGER * d.dot(&(w * &d)))
}

/// One node at one check time.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCheck {
    /// Grid time actually used; the requested time snapped into the interior
    /// of its sampling interval.
    pub t: f64,
    pub node: usize,
    pub v: f64,
    /// Centered difference of `V_i`.
    pub v_dot: f64,
    /// `V̇_i` from the closed-form derivative of the functional.
    pub v_dot_analytic: f64,
    pub lhs: f64,
    /// Sum of the magnitudes of every term in `lhs`.
    pub scale: f64,
}

impl LyapunovCheck {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.lhs / self.scale
        } else {
            self.lhs
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub checks: Vec<LyapunovCheck>,
    /// Largest `lhs / scale`.
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Integral terms of `V_i` at one grid point.
#[derive(Debug, Clone, Copy, Default)]
struct Window {
    /// `∫ e^{−2α(t−s)} e'Se ds`.
    s_int: f64,
    /// `∫ e^{−2α(t−s)} (τ + s − t) ė'Rė ds`.
    r_int: f64,
    /// `∫ e^{−2α(t−s)} ė'Rė ds`.
    r_flat: f64,
    /// `e(t − τ)'S e(t − τ)`.
    s_tail: f64,
}

struct NodeView<'a> {
    trace: &'a SimulationTrace,
    node: usize,
    cert: &'a NodeCertificate,
    tau: f64,
}

impl NodeView<'_> {
    fn quad(&self, m: &Mat, v: &Vector) -> f64 {
        v.dot(&(m * v))
    }

    fn e(&self, q: usize) -> &Vector {
        &self.trace.e[q][self.node]
    }

    /// Composite trapezoid over `[t − τ, t]` with one-sided `ė` at segment
    /// ends, linear interpolation at the window start, and the constant
    /// pre-history `e = x_0`, `ė = 0` before `t = 0`.
    fn window(&self, m: usize) -> Window {
        let times = &self.trace.times;
        let t = times[m];
        let a = t - self.tau;
        let alpha = self.cert.alpha;
        let weight = |s: f64| (-2.0 * alpha * (t - s)).exp();
        let mut out = Window::default();
        if self.tau == 0.0 {
            return out;
        }
        let x0 = &self.trace.x0;
        if a < 0.0 {
            let s0 = self.quad(&self.cert.s, x0);
            let len = if alpha > 0.0 {
                (-2.0 * alpha * t).exp() * -(2.0 * alpha * a).exp_m1() / (2.0 * alpha)
            } else {
                -a
            };
            out.s_int += s0 * len;
            out.s_tail = s0;
        }
        let first = times
            .partition_point(|&s| s <= a.max(0.0))
            .saturating_sub(1);
        for q in first..m {
            let (t0, t1) = (times[q], times[q + 1]);
            let lo = a.max(t0);
            if lo >= t1 {
                continue;
            }
            let es = [
                self.quad(&self.cert.s, self.e(q)),
                self.quad(&self.cert.s, self.e(q + 1)),
            ];
            let rs = [
                self.quad(&self.cert.r, &self.trace.edot[q][self.node]),
                self.quad(&self.cert.r, &self.trace.edot_left[q + 1][self.node]),
            ];
            let frac = (lo - t0) / (t1 - t0);
            let lerp = |v: [f64; 2]| v[0] + frac * (v[1] - v[0]);
            let (s_lo, r_lo) = (lerp(es), lerp(rs));
            if q == first && a >= 0.0 {
                let d = self.e(q) * (1.0 - frac) + self.e(q + 1) * frac;
                out.s_tail = self.quad(&self.cert.s, &d);
            }
            let (w0, w1) = (weight(lo), weight(t1));
            let (k0, k1) = (self.tau + lo - t, self.tau + t1 - t);
            let h = 0.5 * (t1 - lo);
            out.s_int += h * (w0 * s_lo + w1 * es[1]);
            out.r_int += h * (w0 * k0 * r_lo + w1 * k1 * rs[1]);
            out.r_flat += h * (w0 * r_lo + w1 * rs[1]);
        }
        out
    }

    fn value(&self, m: usize, w: &Window) -> f64 {
        self.quad(&self.cert.y_hat, self.e(m)) + w.s_int + self.tau * w.r_int
    }

    /// Closed-form `V̇_i` at an interior grid point.
    fn derivative(&self, m: usize, w: &Window) -> f64 {
        let e = self.e(m);
        let ed = &self.trace.edot[m][self.node];
        let alpha = self.cert.alpha;
        let decay = (-2.0 * alpha * self.tau).exp();
        let ds = self.quad(&self.cert.s, e) - decay * w.s_tail - 2.0 * alpha * w.s_int;
        let dr = self.tau * self.quad(&self.cert.r, ed) - w.r_flat - 2.0 * alpha * w.r_int;
        2.0 * e.dot(&(&self.cert.y_hat * ed)) + ds + self.tau * dr
    }
}

/// Grid point used for check time `t`: inside the sampling interval holding
/// `t`, at least one step away from both ends so the centered difference
/// does not straddle a jump of `ė`.
fn snap(trace: &SimulationTrace, t: f64) -> Result<usize> {
    let times = &trace.times;
    if !(t >= 0.0 && t <= trace.horizon()) {
        return Err(Error::TimeOutOfRange {
            t,
            horizon: trace.horizon(),
        });
    }
    let m = match times.binary_search_by(|s| s.total_cmp(&t)) {
        Ok(m) => m,
        Err(0) => 0,
        Err(m) if m >= times.len() => times.len() - 1,
        Err(m) => {
            if t - times[m - 1] <= times[m] - t {
                m - 1
            } else {
                m
            }
        }
    };
    let k = trace.interval_of(m);
    let lo = trace.sample_index[k] + 1;
    let hi = trace
        .sample_index
        .get(k + 1)
        .copied()
        .unwrap_or(times.len() - 1);
    if hi < lo + 2 {
        return Err(Error::Simulation(format!(
            "sampling interval {k} holds fewer than three grid points; refine dt"
        )));
    }
    Ok(m.clamp(lo, hi - 2))
}

/// Evaluates the left side of the dissipation inequality for every node at
/// every check time. `V̇_i` is a centered difference of the quadrature
/// value of `V_i`; the closed-form derivative is reported alongside.
pub fn lyapunov_diagnostic(
    trace: &SimulationTrace,
    graph: &DirectedGraph,
    certificates: &[NodeCertificate],
    taus: &[f64],
    gamma: f64,
    check_times: &[f64],
) -> Result<LyapunovReport> {
    let nodes = graph.node_count();
    if certificates.len() != nodes || taus.len() != nodes || trace.node_count() != nodes {
        return dim_err(format!(
            "{} certificates, {} delays, {} traced nodes for {nodes} graph nodes",
            certificates.len(),
            taus.len(),
            trace.node_count()
        ));
    }
    if !(gamma > 0.0) {
        return arg_err(format!("gamma must be positive, got {gamma}"));
    }
    if trace.len() < 3 {
        return Err(Error::Simulation(
            "trace too short for a centered difference".into(),
        ));
    }
    let views: Vec<NodeView<'_>> = (0..nodes)
        .map(|i| NodeView {
            trace,
            node: i,
            cert: &certificates[i],
            tau: taus[i],
        })
        .collect();
    let g2 = 1.0 / (gamma * gamma);
    let mut checks = Vec::with_capacity(check_times.len() * nodes);
    for &t in check_times {
        for (i, &tau) in taus.iter().enumerate() {
            if t < tau {
                return Err(Error::Simulation(format!(
                    "check time {t} lies in the startup window [0, {tau}) of node {}",
                    i + 1
                )));
            }
        }
        let m = snap(trace, t)?;
        let k = trace.interval_of(m);
        let dt = trace.times[m + 1] - trace.times[m - 1];
        let windows: Vec<[Window; 3]> = views
            .iter()
            .map(|v| [v.window(m - 1), v.window(m), v.window(m + 1)])
            .collect();
        let values: Vec<f64> = views
            .iter()
            .enumerate()
            .map(|(i, v)| v.value(m, &windows[i][1]))
            .collect();
        for (i, view) in views.iter().enumerate() {
            let cert = view.cert;
            let e = view.e(m);
            let ed = &trace.edot[m][i];
            let v_dot =
                (view.value(m + 1, &windows[i][2]) - view.value(m - 1, &windows[i][0])) / dt;
            let sigma: f64 = graph
                .out_neighbors(i)
                .iter()
                .map(|&j| taus[j] * taus[j])
                .sum();
            let mut terms = vec![
                v_dot,
                2.0 * cert.alpha * values[i],
                sigma * ed.dot(&(&cert.w * ed)),
                -trace.xi[m][i].norm_squared(),
            ];
            let deg = (graph.in_degree(i) + graph.out_degree(i)) as f64;
            terms.push(g2 * deg * e.norm_squared());
            for (slot, &j) in graph.neighbors(i).iter().enumerate() {
                let held = trace.held[k][i][slot].ok_or_else(|| {
                    Error::Simulation(format!(
                        "node {} holds no sample of node {} at t = {}",
                        i + 1,
                        j + 1,
                        trace.times[m]
                    ))
                })?;
                let ej_held = &trace.e[trace.sample_index[held]][j];
                terms.push(-certificates[j].pi * values[j]);
                terms.push(-supply_rate(&certificates[j].w, &trace.e[m][j], ej_held)?);
                terms.push(-2.0 * g2 * e.dot(&trace.e[m][j]));
            }
            let lhs: f64 = terms.iter().sum();
            let scale: f64 = terms.iter().map(|v| v.abs()).sum();
            checks.push(LyapunovCheck {
                t: trace.times[m],
                node: i,
                v: values[i],
                v_dot,
                v_dot_analytic: view.derivative(m, &windows[i][1]),
                lhs,
                scale,
            });
        }
    }
    let max_violation = checks
        .iter()
        .map(LyapunovCheck::relative)
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = checks
        .iter()
        .all(|c| c.lhs <= DIAGNOSTIC_TOLERANCE * c.scale);
    Ok(LyapunovReport {
        checks,
        max_violation,
        tolerance: DIAGNOSTIC_TOLERANCE,
        passed,
    })
}

/// Check times at the midpoint of every `stride`-th sampling interval past
/// the largest startup window.
pub fn default_check_times(trace: &SimulationTrace, taus: &[f64], stride: usize) -> Vec<f64> {
    let start = taus.iter().copied().fold(0.0, f64::max);
    let idx = &trace.sample_index;
    idx.windows(2)
        .step_by(stride.max(1))
        .map(|w| 0.5 * (trace.times[w[0]] + trace.times[w[1]]))
        .filter(|&t| t >= start)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eye;
    use crate::lmi::NodeCertificate;
    use crate::observer::simulate_error_dynamics;
    use crate::observer::testutil::{m, ring3, synthetic_trace};
    use crate::plant::Scenario;
    use crate::schedule::SamplingSchedule;

    fn cert(alpha: f64, pi: f64) -> NodeCertificate {
        NodeCertificate {
            y_hat: m(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            s: m(2, 2, &[0.5, 0.1, 0.1, 0.4]),
            r: m(2, 2, &[0.2, 0.0, 0.0, 0.3]),
            w: m(2, 2, &[0.1, 0.02, 0.02, 0.05]),
            g: m(2, 2, &[0.0, 0.01, 0.0, 0.0]),
            alpha,
            pi,
        }
    }

    #[test]
    fn supply_rate_examples() {
        let u = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(supply_rate(&eye(2), &u, &u).unwrap(), 0.0);
        let z = Vector::zeros(2);
        assert!((supply_rate(&eye(2), &u, &z).unwrap() - 2.4674011002723395).abs() < 1e-15);
        assert!(supply_rate(&eye(3), &u, &z).is_err());
    }

    #[test]
    fn zero_trace_has_zero_left_side() {
        let graph = crate::graph::DirectedGraph::ring(3).unwrap();
        let times: Vec<f64> = (0..101).map(|k| k as f64 * 0.01).collect();
        let zero = vec![vec![Vector::zeros(2); 3]; times.len()];
        let tr = synthetic_trace(times, zero.clone(), zero, 10, &graph);
        let certs = vec![cert(1.0, 0.5); 3];
        let rep = lyapunov_diagnostic(&tr, &graph, &certs, &[0.1; 3], 0.5, &[0.35, 0.75]).unwrap();
        assert!(rep.passed);
        assert!(rep.checks.iter().all(|c| c.lhs == 0.0 && c.v == 0.0));
    }

    #[test]
    fn functional_matches_fine_quadrature() {
        // e(t) = c·e^{−t} on both nodes; compare V with a dense midpoint rule
        let graph = crate::graph::DirectedGraph::ring(2).unwrap();
        let c = Vector::from_vec(vec![1.0, -0.5]);
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 1e-3).collect();
        let e: Vec<Vec<Vector>> = times.iter().map(|t| vec![&c * (-t).exp(); 2]).collect();
        let ed: Vec<Vec<Vector>> = times.iter().map(|t| vec![&c * -(-t).exp(); 2]).collect();
        let tr = synthetic_trace(times, e, ed, 100, &graph);
        let (alpha, tau) = (0.8, 0.3);
        let ct = cert(alpha, 0.2);
        let rep = lyapunov_diagnostic(
            &tr,
            &graph,
            &[ct.clone(), ct.clone()],
            &[tau; 2],
            1.0,
            &[1.05],
        )
        .unwrap();
        let t = rep.checks[0].t;
        let (sc, rc) = (c.dot(&(&ct.s * &c)), c.dot(&(&ct.r * &c)));
        let steps = 200_000;
        let ds = tau / steps as f64;
        let mut want = c.dot(&(&ct.y_hat * &c)) * (-2.0 * t).exp();
        for q in 0..steps {
            let s = t - tau + (q as f64 + 0.5) * ds;
            let w = (-2.0 * alpha * (t - s)).exp() * (-2.0 * s).exp();
            want += ds * w * (sc + tau * (tau + s - t) * rc);
        }
        let got = rep.checks[0].v;
        assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
        for chk in &rep.checks {
            assert!((chk.v_dot - chk.v_dot_analytic).abs() < 1e-5 * chk.v_dot.abs());
        }
    }

    #[test]
    fn startup_window_and_range_errors() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 2.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate_error_dynamics(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let certs = vec![cert(1.0, 0.5); 3];
        assert!(lyapunov_diagnostic(&tr, &graph, &certs, &[0.1; 3], 1.0, &[0.05]).is_err());
        assert!(lyapunov_diagnostic(&tr, &graph, &certs, &[0.1; 3], 1.0, &[2.5]).is_err());
        assert!(lyapunov_diagnostic(&tr, &graph, &certs[..2], &[0.1; 3], 1.0, &[0.5]).is_err());
        let rep =
            lyapunov_diagnostic(&tr, &graph, &certs, &[0.1; 3], 1.0, &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(rep.checks.len(), 9);
        assert!(rep
            .checks
            .iter()
            .all(|c| (c.v_dot - c.v_dot_analytic).abs() < 1e-4 * c.scale));
    }

    #[test]
    fn check_times_skip_the_startup_window() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 1.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate_error_dynamics(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let times = default_check_times(&tr, &[0.3, 0.1, 0.1], 2);
        assert!(times.iter().all(|&t| t >= 0.3));
        assert!((times[0] - 0.45).abs() < 1e-12);
    }
}
