//! Traces the smallest certifiable γ against the uniform sampling step for
//! the ring fixture. Longer steps mean longer delays and a larger γ.

use std::path::Path;

use rrhoc::cli::Setup;
use rrhoc::lmi::NetworkContext;
use rrhoc::solver::minimize_gamma;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/ring3.json");

fn main() -> rrhoc::Result<()> {
    env_logger::init();
    let s = Setup::load(Path::new(FIXTURE))?;
    for &h in &s.config.sweep.steps {
        let schedule = s.schedule_with_step(h)?;
        let net = NetworkContext::new(&s.model, &s.graph, &schedule.delay_bounds(&s.graph)?)?;
        match minimize_gamma(
            &net,
            &s.config.grid,
            &s.config.budget,
            &s.config.gamma_search,
        ) {
            Ok(o) => println!(
                "h = {h:<5} tau = {:.3}  gamma_min = {:.4}  ({} probes)",
                schedule.network_max_delay(&s.graph)?,
                o.gamma_min,
                o.probes.len()
            ),
            Err(e) => println!("h = {h:<5} {e}"),
        }
    }
    Ok(())
}
