//! Synthesizes gains for the ring fixture at a fixed γ, then simulates the
//! nominal run and one disturbed scenario and reports the disagreement cost
//! against the bound γ².

use std::path::Path;

use rrhoc::cli::Setup;
use rrhoc::lmi::NetworkContext;
use rrhoc::observer::{
    decay_rate_estimate, disagreement_cost, performance_ratio, simulate, simulate_error_dynamics,
};
use rrhoc::solver::synthesize;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/ring3.json");

fn main() -> rrhoc::Result<()> {
    env_logger::init();
    let s = Setup::load(Path::new(FIXTURE))?;
    let net = NetworkContext::new(&s.model, &s.graph, &s.schedule.delay_bounds(&s.graph)?)?;
    let gamma = 0.25;
    let result = synthesize(&net, gamma, &s.config.grid, &s.config.budget)?;
    let dt = s.config.simulation.dt;

    let battery = s.battery(s.config.seed)?;
    for scenario in battery.iter().take(2) {
        let trace = simulate(&s.model, &s.graph, &s.schedule, &result.gains, scenario, dt)?;
        let cost = disagreement_cost(&trace, &s.graph)?;
        let ratio = performance_ratio(&trace, &s.graph, &result.p_matrix)?;
        println!(
            "{}: J = {:.4e} (pairwise {:.4e}, degree form {:.4e}), ratio {:.4e} vs gamma^2 {:.4e}",
            scenario.name,
            cost.value(),
            cost.pairwise,
            cost.degree_form,
            ratio,
            gamma * gamma
        );
    }
    // the decay fit needs the error coordinates; x - xhat floors at round-off
    let fine = simulate_error_dynamics(
        &s.model,
        &s.graph,
        &s.schedule,
        &result.gains,
        &battery[0],
        dt,
    )?;
    println!("nominal decay rate {:.3}", decay_rate_estimate(&fine)?);
    Ok(())
}
