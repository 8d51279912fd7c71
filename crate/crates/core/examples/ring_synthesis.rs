//! Minimizes γ for three observers on a directed ring watching a plant with
//! one slightly unstable mode, then prints the gains.

use rrhoc::graph::DirectedGraph;
use rrhoc::linalg::Mat;
use rrhoc::lmi::NetworkContext;
use rrhoc::plant::{NetworkModel, NodeMeasurement, PlantModel};
use rrhoc::schedule::SamplingSchedule;
use rrhoc::solver::{minimize_gamma, GammaSearch, ScalarGrid, SolverBudget};

fn main() -> rrhoc::Result<()> {
    env_logger::init();
    let plant = PlantModel::new(
        Mat::from_row_slice(2, 2, &[0.05, 1.0, 0.0, -1.0]),
        Mat::from_row_slice(2, 1, &[1.0, 0.5]),
        rrhoc::linalg::Vector::from_vec(vec![1.0, -1.0]),
    )?;
    let outputs = [[1.0, 0.0], [1.0, 1.0], [0.5, 1.0]];
    let nodes = outputs
        .iter()
        .map(|c| {
            let s = |v| Mat::from_element(1, 1, v);
            NodeMeasurement::new(&plant, Mat::from_row_slice(1, 2, c), s(0.1), s(0.1), None)
        })
        .collect::<rrhoc::Result<Vec<_>>>()?;
    let model = NetworkModel::new(plant, nodes)?;
    let graph = DirectedGraph::ring(3)?;
    let schedule = SamplingSchedule::uniform(0.1, 50.0)?;
    let taus = schedule.delay_bounds(&graph)?;
    let net = NetworkContext::new(&model, &graph, &taus)?;

    let out = minimize_gamma(
        &net,
        &ScalarGrid::default(),
        &SolverBudget::default(),
        &GammaSearch::default(),
    )?;
    println!(
        "gamma_min = {:.4} (bracket [{:.4}, {:.4}], {} probes, monotone: {})",
        out.gamma_min,
        out.gamma_lo,
        out.gamma_min,
        out.probes.len(),
        out.monotone
    );
    println!("grid point: {:?}", out.result.grid_point);
    for (i, g) in out.result.gains.iter().enumerate() {
        println!("node {}: K = {:.4}, L = {:.4}", i + 1, g.k, g.l);
    }
    println!(
        "analysis max eigenvalue {:.3e}",
        out.result.analysis_max_eigenvalue
    );
    Ok(())
}
