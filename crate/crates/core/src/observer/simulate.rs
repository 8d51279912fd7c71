use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{Mat, Vector};
use crate::lmi::NodeGains;
use crate::plant::{NetworkModel, Scenario};
use crate::schedule::SamplingSchedule;

/// Relative tolerance for `dt` dividing a sampling gap.
const ALIGN_TOL: f64 = 1e-6;

/// Multiple of machine epsilon times the largest state norm taken as the
/// resolution of `e_i = x − x̂_i`.
const ROUNDING_FACTOR: f64 = 1e3;

/// Node `node` stored a fresh sample of `neighbor` at `t_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RefreshEvent {
    pub k: usize,
    pub node: usize,
    pub neighbor: usize,
}

/// Sampled trajectory of the plant and every observer.
///
/// Grid point `m` holds right limits; `edot_left[m]` differs from `edot[m]`
/// only at sampling instants, where the held couplings change.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    /// `[grid point][node]`.
    pub xhat: Vec<Vec<Vector>>,
    pub e: Vec<Vec<Vector>>,
    pub edot: Vec<Vec<Vector>>,
    pub edot_left: Vec<Vec<Vector>>,
    /// `ξ_i` at each grid point (right limit).
    pub xi: Vec<Vec<Vector>>,
    /// `Σ_i ∫_0^{t_m} ‖ξ_i‖²`, per-step Simpson rule.
    pub xi_energy: Vec<f64>,
    /// Grid index of every sampling instant `t_k`.
    pub sample_index: Vec<usize>,
    /// `held[k][i][slot]`: sampling index whose value node `i` holds for
    /// its `slot`-th in-neighbor (ascending order) during interval `k`.
    pub held: Vec<Vec<Vec<Option<usize>>>>,
    pub refreshes: Vec<RefreshEvent>,
    pub x0: Vector,
    /// Absolute level below which `‖e_i‖` is rounding noise.
    pub error_floor: f64,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.xhat.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// `Σ_i ‖ξ_i‖²₂` over the horizon.
    pub fn total_xi_energy(&self) -> f64 {
        *self.xi_energy.last().unwrap_or(&0.0)
    }

    /// Interval `k` with `t_k ≤ times[m] < t_{k+1}`.
    pub fn interval_of(&self, m: usize) -> usize {
        self.sample_index
            .partition_point(|&s| s <= m)
            .saturating_sub(1)
    }

    /// CSV with header `t,x[0],…,xhat1[0],…,e1[0],…`.
    pub fn to_csv(&self) -> String {
        let n = self.x0.len();
        let nodes = self.node_count();
        let mut out = String::from("t");
        for c in 0..n {
            let _ = write!(out, ",x[{c}]");
        }
        for prefix in ["xhat", "e"] {
            for i in 0..nodes {
                for c in 0..n {
                    let _ = write!(out, ",{prefix}{}[{c}]", i + 1);
                }
            }
        }
        out.push('\n');
        for m in 0..self.len() {
            let _ = write!(out, "{:e}", self.times[m]);
            for v in self.x[m].iter() {
                let _ = write!(out, ",{v:e}");
            }
            for block in [&self.xhat[m], &self.e[m]] {
                for vec in block {
                    for v in vec.iter() {
                        let _ = write!(out, ",{v:e}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Integration grid: every `t_k` plus `steps[k]` equal sub-steps per gap.
#[derive(Debug, Clone)]
struct Grid {
    /// Interval endpoints `t_0, …, t_K` followed by the horizon when it lies
    /// past the last instant.
    ends: Vec<f64>,
    steps: Vec<usize>,
    /// Number of sampling instants; `ends.len() − 1` intervals.
    samples: usize,
}

fn build_grid(schedule: &SamplingSchedule, dt: f64) -> Result<Grid> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Simulation(format!("dt must be positive, got {dt}")));
    }
    let mut ends = schedule.times().to_vec();
    let samples = ends.len();
    let last = *ends.last().unwrap();
    if schedule.horizon() > last * (1.0 + 1e-12) + 1e-12 {
        ends.push(schedule.horizon());
    }
    if ends.len() < 2 {
        return Err(Error::Simulation(
            "horizon shorter than one sampling interval".into(),
        ));
    }
    let steps = ends
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0];
            let m = (gap / dt).round();
            if m < 1.0 || (m * dt - gap).abs() > ALIGN_TOL * gap {
                Err(Error::Simulation(format!(
                    "dt = {dt} does not divide the gap {gap} starting at t = {}",
                    w[0]
                )))
            } else {
                Ok(m as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid {
        ends,
        steps,
        samples,
    })
}

fn check_inputs(
    model: &NetworkModel,
    graph: &DirectedGraph,
    gains: &[NodeGains],
    scenario: &Scenario,
) -> Result<()> {
    let n = model.plant().state_dim();
    if graph.node_count() != model.node_count() || gains.len() != model.node_count() {
        return dim_err(format!(
            "graph has {} nodes, model {}, gains {}",
            graph.node_count(),
            model.node_count(),
            gains.len()
        ));
    }
    for (i, g) in gains.iter().enumerate() {
        let node = model.node(i);
        if g.k.shape() != (n, node.coupling_dim()) || g.l.shape() != (n, node.output_dim()) {
            return dim_err(format!(
                "node {}: K is {:?}, L is {:?}, expected ({n}, {}) and ({n}, {})",
                i + 1,
                g.k.shape(),
                g.l.shape(),
                node.coupling_dim(),
                node.output_dim()
            ));
        }
    }
    scenario.validate(model)
}

/// Per-node data constant over a run.
struct NodeData {
    acl: Mat,
    l: Mat,
    c: Mat,
    d: Mat,
    k: Mat,
    h: Mat,
    bld: Mat,
}

fn node_data(model: &NetworkModel, gains: &[NodeGains]) -> Vec<NodeData> {
    let a = model.plant().a();
    (0..model.node_count())
        .map(|i| {
            let node = model.node(i);
            let g = &gains[i];
            NodeData {
                acl: a - &g.l * node.c(),
                l: g.l.clone(),
                c: node.c().clone(),
                d: node.stacked_d(),
                k: g.k.clone(),
                h: node.h().clone(),
                bld: model.stacked_b(i) - &g.l * node.stacked_d(),
            }
        })
        .collect()
}

/// Refreshes, at instant `t_k`, the slot of the front element of `Π^k(V_i)`
/// for every node. Both coordinate choices hold `s_j − s_i`, which is
/// `x̂_j − x̂_i` or `e_j − e_i`.
#[allow(clippy::too_many_arguments)]
fn poll(
    k: usize,
    z: &Vector,
    n: usize,
    graph: &DirectedGraph,
    data: &[NodeData],
    buffers: &mut [Vec<Vector>],
    held: &mut [Vec<Option<usize>>],
    trace: &mut SimulationTrace,
) {
    let s: Vec<Vector> = (0..data.len())
        .map(|i| z.rows(n * (i + 1), n).into_owned())
        .collect();
    for i in 0..data.len() {
        if let Some(j) = graph.polled_neighbor(i, k) {
            let slot = graph
                .neighbors(i)
                .binary_search(&j)
                .expect("polled node is a neighbor");
            buffers[i][slot] = &data[i].h * (&s[j] - &s[i]);
            held[i][slot] = Some(k);
            trace.refreshes.push(RefreshEvent {
                k,
                node: i,
                neighbor: j,
            });
        }
    }
    trace.sample_index.push(trace.times.len());
    trace.held.push(held.to_vec());
}

fn rk4<F: Fn(f64, &Vector) -> Vector>(f: &F, t: f64, z: &Vector, h: f64) -> Vector {
    let k1 = f(t, z);
    let k2 = f(t + 0.5 * h, &(z + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(z + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(z + &k3 * h));
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn xi_energy_step(scenario: &Scenario, nodes: usize, t: f64, h: f64) -> f64 {
    let anchor = t + 0.5 * h;
    let e = |s: f64| {
        (0..nodes)
            .map(|i| scenario.xi(i, s, anchor).norm_squared())
            .sum::<f64>()
    };
    h / 6.0 * (e(t) + 4.0 * e(anchor) + e(t + h))
}

/// State coordinates of the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coordinates {
    /// `[x; x̂_1; …; x̂_N]`; `e_i = x − x̂_i` is formed by subtraction.
    Observer,
    /// `[x; e_1; …; e_N]`; `e_i` keeps full relative precision as it decays.
    Error,
}

/// Integrates the plant and all observers under the Round-Robin protocol.
///
/// On `[t_k, t_{k+1})` observer `i` runs
/// `x̂̇_i = Ax̂_i + L_i(y_i − C_ix̂_i) + K_i Σ_slots held_i`, where at `t_k` only
/// the front element `j` of `Π^k(V_i)` refreshes its slot with
/// `H_i(x̂_j(t_k) − x̂_i(t_k))`. Slots start at zero and observers at
/// `x̂_i(0) = 0`. `dt` must divide every sampling gap.
pub fn simulate(
    model: &NetworkModel,
    graph: &DirectedGraph,
    schedule: &SamplingSchedule,
    gains: &[NodeGains],
    scenario: &Scenario,
    dt: f64,
) -> Result<SimulationTrace> {
    run(
        model,
        graph,
        schedule,
        gains,
        scenario,
        dt,
        Coordinates::Observer,
    )
}

/// Integrates the error dynamics
/// `ė_i = (A − L_iC_i)e_i + (B − L_iD_i)ξ_i + K_iH_i Σ_j (e_j − e_i)(t_{k−ν_j+1})`
/// directly from `e_i(0) = x_0`, alongside the plant, with the same polling
/// and zero-initialized hold slots as [`simulate`]. `x̂_i` is reported as
/// `x − e_i`.
///
/// Once the errors fall far below the plant state, `x − x̂_i` in [`simulate`]
/// is dominated by rounding; this form resolves them down to underflow and
/// is the one to feed to decay fits and the Lyapunov diagnostic.
pub fn simulate_error_dynamics(
    model: &NetworkModel,
    graph: &DirectedGraph,
    schedule: &SamplingSchedule,
    gains: &[NodeGains],
    scenario: &Scenario,
    dt: f64,
) -> Result<SimulationTrace> {
    run(
        model,
        graph,
        schedule,
        gains,
        scenario,
        dt,
        Coordinates::Error,
    )
}

fn run(
    model: &NetworkModel,
    graph: &DirectedGraph,
    schedule: &SamplingSchedule,
    gains: &[NodeGains],
    scenario: &Scenario,
    dt: f64,
    coords: Coordinates,
) -> Result<SimulationTrace> {
    check_inputs(model, graph, gains, scenario)?;
    let grid = build_grid(schedule, dt)?;
    let n = model.plant().state_dim();
    let count = model.node_count();
    let data = node_data(model, gains);
    let a = model.plant().a().clone();
    let b2 = model.plant().b2().clone();

    let mut buffers: Vec<Vec<Vector>> = (0..count)
        .map(|i| vec![Vector::zeros(model.node(i).coupling_dim()); graph.in_degree(i)])
        .collect();
    let mut held: Vec<Vec<Option<usize>>> =
        (0..count).map(|i| vec![None; graph.in_degree(i)]).collect();

    // z = [x; s_1; …; s_N] with s_i = x̂_i or e_i
    let mut z = Vector::zeros(n * (count + 1));
    z.rows_mut(0, n).copy_from(&scenario.x0);
    if coords == Coordinates::Error {
        for i in 0..count {
            z.rows_mut(n * (i + 1), n).copy_from(&scenario.x0);
        }
    }

    let field = |t: f64, z: &Vector, anchor: f64, coupling: &[Vector]| -> Vector {
        let x = z.rows(0, n).into_owned();
        let w = scenario.w.value_anchored(t, anchor);
        let mut dz = Vector::zeros(z.len());
        dz.rows_mut(0, n).copy_from(&(&a * &x + &b2 * &w));
        for i in 0..count {
            let s = z.rows(n * (i + 1), n);
            let xi = scenario.xi(i, t, anchor);
            let nd = &data[i];
            let d = match coords {
                Coordinates::Observer => {
                    let y = &nd.c * &x + &nd.d * &xi;
                    &nd.acl * s + &nd.l * y + &coupling[i]
                }
                Coordinates::Error => &nd.acl * s + &nd.bld * &xi + &coupling[i],
            };
            dz.rows_mut(n * (i + 1), n).copy_from(&d);
        }
        dz
    };

    // (x, x̂, e) from z
    let split = |z: &Vector| -> (Vector, Vec<Vector>, Vec<Vector>) {
        let x = z.rows(0, n).into_owned();
        let s: Vec<Vector> = (0..count)
            .map(|i| z.rows(n * (i + 1), n).into_owned())
            .collect();
        let other: Vec<Vector> = s.iter().map(|v| &x - v).collect();
        match coords {
            Coordinates::Observer => (x, s, other),
            Coordinates::Error => (x, other, s),
        }
    };
    let edot_of = |dz: &Vector| -> Vec<Vector> {
        let dx = dz.rows(0, n);
        (0..count)
            .map(|i| {
                let ds = dz.rows(n * (i + 1), n);
                match coords {
                    Coordinates::Observer => (dx - ds).into_owned(),
                    Coordinates::Error => ds.into_owned(),
                }
            })
            .collect()
    };

    let total: usize = grid.steps.iter().sum::<usize>() + 1;
    let mut trace = SimulationTrace {
        times: Vec::with_capacity(total),
        x: Vec::with_capacity(total),
        xhat: Vec::with_capacity(total),
        e: Vec::with_capacity(total),
        edot: Vec::with_capacity(total),
        edot_left: Vec::with_capacity(total),
        xi: Vec::with_capacity(total),
        xi_energy: Vec::with_capacity(total),
        sample_index: Vec::with_capacity(grid.samples),
        held: Vec::with_capacity(grid.samples),
        refreshes: Vec::new(),
        x0: scenario.x0.clone(),
        error_floor: 0.0,
    };

    let mut energy = 0.0;
    let mut pending_left: Option<Vec<Vector>> = None;
    for (k, win) in grid.ends.windows(2).enumerate() {
        let (tk, tk1) = (win[0], win[1]);
        if k < grid.samples {
            poll(k, &z, n, graph, &data, &mut buffers, &mut held, &mut trace);
        }
        let coupling: Vec<Vector> = (0..count)
            .map(|i| {
                buffers[i]
                    .iter()
                    .fold(Vector::zeros(n), |acc, b| acc + &data[i].k * b)
            })
            .collect();
        let steps = grid.steps[k];
        let h = (tk1 - tk) / steps as f64;
        for s in 0..steps {
            let t = tk + s as f64 * h;
            let anchor = t + 0.5 * h;
            let dz = field(t, &z, anchor, &coupling);
            let (x, xh, e) = split(&z);
            trace.times.push(t);
            trace.x.push(x);
            trace.xhat.push(xh);
            trace.e.push(e);
            let right = edot_of(&dz);
            trace
                .edot_left
                .push(pending_left.take().unwrap_or_else(|| right.clone()));
            trace.edot.push(right);
            trace
                .xi
                .push((0..count).map(|i| scenario.xi(i, t, anchor)).collect());
            trace.xi_energy.push(energy);
            energy += xi_energy_step(scenario, count, t, h);
            let f = |tt: f64, zz: &Vector| field(tt, zz, anchor, &coupling);
            z = rk4(&f, t, &z, h);
            let end = tk + (s + 1) as f64 * h;
            pending_left = Some(edot_of(&field(end, &z, anchor, &coupling)));
        }
    }
    if trace.sample_index.len() < grid.samples {
        // the horizon coincides with the last instant, which opens no interval
        poll(
            grid.samples - 1,
            &z,
            n,
            graph,
            &data,
            &mut buffers,
            &mut held,
            &mut trace,
        );
    }
    // final point; the last coupling stays in force
    let t_end = *grid.ends.last().unwrap();
    let (x, xh, e) = split(&z);
    trace.times.push(t_end);
    trace.x.push(x);
    trace.xhat.push(xh);
    trace.e.push(e);
    let left = pending_left.take().expect("at least one step");
    trace.edot.push(left.clone());
    trace.edot_left.push(left);
    let after = t_end + 1e-12;
    trace
        .xi
        .push((0..count).map(|i| scenario.xi(i, t_end, after)).collect());
    trace.xi_energy.push(energy);
    trace.error_floor = match coords {
        Coordinates::Observer => {
            let size = |m: usize| {
                trace.xhat[m]
                    .iter()
                    .map(Vector::norm)
                    .fold(trace.x[m].norm(), f64::max)
            };
            ROUNDING_FACTOR * f64::EPSILON * (0..trace.len()).map(size).fold(0.0, f64::max)
        }
        Coordinates::Error => f64::MIN_POSITIVE,
    };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::zeros;
    use crate::observer::testutil::{ring3, scalar_pair};
    use crate::plant::DisturbanceSignal;

    fn disturbed(model: &NetworkModel, x0: Vector) -> Scenario {
        let mut s = Scenario::unperturbed("d", x0, model);
        s.w = DisturbanceSignal::sinusoid(vec![0.8], 0.7, 0.3, 3.0).unwrap();
        for (i, v) in s.v.iter_mut().enumerate() {
            *v = DisturbanceSignal::sinusoid(vec![0.5; v.dim], 1.1 + i as f64, 0.0, 2.0).unwrap();
        }
        s
    }

    #[test]
    fn zero_state_and_disturbance_stay_zero() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 2.0).unwrap();
        let sc = Scenario::unperturbed("z", Vector::zeros(2), &model);
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        assert_eq!(tr.len(), 201);
        for m in 0..tr.len() {
            assert_eq!(tr.x[m].norm(), 0.0);
            assert!(tr.xhat[m].iter().chain(&tr.e[m]).all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn uncoupled_nodes_match_matrix_exponential() {
        let (model, graph, mut gains) = ring3();
        for g in &mut gains {
            g.k = zeros(2, 2);
        }
        let schedule = SamplingSchedule::uniform(0.1, 3.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let a = model.plant().a();
        for (i, g) in gains.iter().enumerate() {
            let lc = &g.l * model.node(i).c();
            let mut big = zeros(4, 4);
            big.view_mut((0, 0), (2, 2)).copy_from(a);
            big.view_mut((2, 0), (2, 2)).copy_from(&lc);
            big.view_mut((2, 2), (2, 2)).copy_from(&(a - &lc));
            let z0 = Vector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
            for m in (0..tr.len()).step_by(37) {
                let z = (&big * tr.times[m]).exp() * &z0;
                let err = (tr.xhat[m][i].clone() - z.rows(2, 2)).norm();
                assert!(
                    err < 1e-9 * (1.0 + z.norm()),
                    "node {i} t {} err {err}",
                    tr.times[m]
                );
            }
        }
    }

    /// Independent hand-stepped protocol at `dt/100` on the scalar pair.
    fn fine_oracle(
        model: &NetworkModel,
        gains: &[NodeGains],
        sc: &Scenario,
        h: f64,
        intervals: usize,
        dt: f64,
    ) -> Vec<[f64; 3]> {
        let a = model.plant().a()[(0, 0)];
        let b = model.plant().b2()[(0, 0)];
        let c: Vec<f64> = (0..2).map(|i| model.node(i).c()[(0, 0)]).collect();
        let d2: Vec<f64> = (0..2).map(|i| model.node(i).d2()[(0, 0)]).collect();
        let db: Vec<f64> = (0..2).map(|i| model.node(i).dbar2()[(0, 0)]).collect();
        let (k, l): (Vec<f64>, Vec<f64>) = gains.iter().map(|g| (g.k[(0, 0)], g.l[(0, 0)])).unzip();
        let f = |t: f64, z: [f64; 3], held: [f64; 2]| -> [f64; 3] {
            let w = sc.w.value(t)[0];
            let mut out = [a * z[0] + b * w, 0.0, 0.0];
            for i in 0..2 {
                let y = c[i] * z[0] + d2[i] * w + db[i] * sc.v[i].value(t)[0];
                out[i + 1] = a * z[i + 1] + l[i] * (y - c[i] * z[i + 1]) + k[i] * held[i];
            }
            out
        };
        let add =
            |z: [f64; 3], d: [f64; 3], s: f64| [z[0] + s * d[0], z[1] + s * d[1], z[2] + s * d[2]];
        let mut z = [sc.x0[0], 0.0, 0.0];
        let mut out = vec![z];
        let sub = (h / dt).round() as usize;
        for k in 0..intervals {
            let held = [z[2] - z[1], z[1] - z[2]];
            for s in 0..sub {
                let t = k as f64 * h + s as f64 * dt;
                let k1 = f(t, z, held);
                let k2 = f(t + dt / 2.0, add(z, k1, dt / 2.0), held);
                let k3 = f(t + dt / 2.0, add(z, k2, dt / 2.0), held);
                let k4 = f(t + dt, add(z, k3, dt), held);
                z = [0, 1, 2]
                    .map(|c| z[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]));
            }
            out.push(z);
        }
        out
    }

    #[test]
    fn held_samples_match_fine_step_oracle() {
        let (model, graph, gains) = scalar_pair();
        let h = 0.1;
        let schedule = SamplingSchedule::uniform(h, 1.0).unwrap();
        let sc = disturbed(&model, model.plant().x0().clone());
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let oracle = fine_oracle(&model, &gains, &sc, h, 10, 1e-4);
        for (k, &m) in tr.sample_index.iter().enumerate() {
            let got = [tr.x[m][0], tr.xhat[m][0][0], tr.xhat[m][1][0]];
            for c in 0..3 {
                let want = oracle[k][c];
                assert!(
                    (got[c] - want).abs() <= 1e-6 * want.abs().max(1e-3),
                    "k {k} c {c}: {} vs {want}",
                    got[c]
                );
            }
        }
    }

    #[test]
    fn refresh_cycles_and_held_timestamps() {
        let edges: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (j, i)))
            .collect();
        let graph = DirectedGraph::new(4, &edges).unwrap();
        let (model3, _, _) = ring3();
        let plant = model3.plant().clone();
        let nodes = (0..4).map(|i| model3.node(i % 3).clone()).collect();
        let model = NetworkModel::new(plant, nodes).unwrap();
        let gains: Vec<NodeGains> = (0..4).map(|i| ring3().2[i % 3].clone()).collect();
        let schedule = SamplingSchedule::uniform(0.1, 2.0).unwrap();
        let sc = disturbed(&model, model.plant().x0().clone());
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.05).unwrap();
        for i in 0..4 {
            let polled: Vec<usize> = tr
                .refreshes
                .iter()
                .filter(|r| r.node == i)
                .map(|r| r.neighbor)
                .collect();
            assert_eq!(polled.len(), schedule.len());
            for w in polled.windows(3) {
                let mut w = w.to_vec();
                w.sort_unstable();
                assert_eq!(w, graph.neighbors(i));
            }
            for k in 0..schedule.len() {
                for (slot, &j) in graph.neighbors(i).iter().enumerate() {
                    let nu = graph.index_in_permutation(i, k, j).unwrap();
                    let want = (k + 1).checked_sub(nu);
                    assert_eq!(tr.held[k][i][slot], want, "node {i} k {k} j {j}");
                }
            }
        }
        // the polled sum over Π^k(V_i) equals the sum over V_i
        let m = tr.sample_index[7];
        for i in 0..4 {
            let term = |j: usize| (&tr.xhat[m][j] - &tr.xhat[m][i]).norm_squared();
            let over_perm: f64 = graph
                .permutation_power(i, 7)
                .unwrap()
                .into_iter()
                .map(term)
                .sum();
            let over_set: f64 = graph.neighbors(i).iter().map(|&j| term(j)).sum();
            assert!((over_perm - over_set).abs() <= 1e-15 * over_set.max(1.0));
        }
    }

    #[test]
    fn observer_and_error_coordinates_agree() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 5.0).unwrap();
        let sc = disturbed(&model, model.plant().x0().clone());
        let a = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        let b = simulate_error_dynamics(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.refreshes, b.refreshes);
        for m in 0..a.len() {
            for i in 0..3 {
                assert!((&a.e[m][i] - &b.e[m][i]).norm() < 1e-10);
                assert!((&a.edot[m][i] - &b.edot[m][i]).norm() < 1e-9);
            }
        }
        assert!(b.error_floor < a.error_floor);
    }

    #[test]
    fn left_and_right_derivatives_differ_only_at_instants() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 1.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let tr = simulate(&model, &graph, &schedule, &gains, &sc, 0.01).unwrap();
        for m in 1..tr.len() - 1 {
            let jump: f64 = (0..3)
                .map(|i| (&tr.edot[m][i] - &tr.edot_left[m][i]).norm())
                .sum();
            if tr.sample_index.contains(&m) {
                assert!(jump > 1e-6, "no jump at instant index {m}");
            } else {
                assert!(jump < 1e-12, "jump {jump} at {m}");
            }
        }
    }

    #[test]
    fn input_errors() {
        let (model, graph, gains) = ring3();
        let schedule = SamplingSchedule::uniform(0.1, 1.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        assert!(matches!(
            simulate(&model, &graph, &schedule, &gains, &sc, 0.03),
            Err(Error::Simulation(_))
        ));
        assert!(simulate(&model, &graph, &schedule, &gains, &sc, 0.0).is_err());
        let mut bad = gains.clone();
        bad[1].k = zeros(2, 3);
        assert!(matches!(
            simulate(&model, &graph, &schedule, &bad, &sc, 0.01),
            Err(Error::Dimension(_))
        ));
        let single = SamplingSchedule::explicit(vec![0.0], None).unwrap();
        assert!(simulate(&model, &graph, &single, &gains, &sc, 0.01).is_err());
    }

    #[test]
    fn csv_layout() {
        let (model, graph, gains) = scalar_pair();
        let schedule = SamplingSchedule::uniform(0.5, 1.0).unwrap();
        let sc = Scenario::unperturbed("u", model.plant().x0().clone(), &model);
        let csv = simulate(&model, &graph, &schedule, &gains, &sc, 0.25)
            .unwrap()
            .to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x[0],xhat1[0],xhat2[0],e1[0],e2[0]"
        );
        assert_eq!(lines.count(), 5);
    }
}
