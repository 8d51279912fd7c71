//! Minimizes γ for the ring fixture and judges the result by simulation
//! over a small seeded disturbance battery.

use std::path::Path;

use rrhoc::certify::{certify, CertifyOptions};
use rrhoc::cli::Setup;
use rrhoc::lmi::NetworkContext;
use rrhoc::solver::minimize_gamma;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/ring3.json");

fn main() -> rrhoc::Result<()> {
    env_logger::init();
    let mut s = Setup::load(Path::new(FIXTURE))?;
    s.config.battery.count = 4;
    let net = NetworkContext::new(&s.model, &s.graph, &s.schedule.delay_bounds(&s.graph)?)?;
    let out = minimize_gamma(
        &net,
        &s.config.grid,
        &s.config.budget,
        &s.config.gamma_search,
    )?;
    let report = certify(
        &s.model,
        &s.graph,
        &s.schedule,
        &out.result,
        &s.battery(s.config.seed)?,
        &CertifyOptions::default(),
    )?;
    for sc in &report.scenarios {
        println!(
            "{:>10}: ratio {:.4e}, tail {:.1e}, lyapunov {:?}",
            sc.name, sc.ratio, sc.tail_fraction, sc.lyapunov_passed
        );
    }
    println!(
        "gamma {:.4}, bound {:.4e}, max ratio {:.4e}",
        report.gamma, report.performance.bound, report.performance.max_ratio
    );
    println!("{}", report.statement);
    Ok(())
}
