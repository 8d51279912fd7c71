//! Simulation of the Round-Robin observer network and trajectory metrics.

mod lyapunov;
mod metrics;
mod simulate;

pub use lyapunov::{
    default_check_times, lyapunov_diagnostic, supply_rate, LyapunovCheck, LyapunovReport,
    DIAGNOSTIC_TOLERANCE,
};
pub use metrics::{
    decay_rate_estimate, disagreement_cost, performance_ratio, tail_energy_fraction,
    DisagreementCost, HORIZON_TAIL_LIMIT,
};
pub use simulate::{simulate, simulate_error_dynamics, RefreshEvent, SimulationTrace};
