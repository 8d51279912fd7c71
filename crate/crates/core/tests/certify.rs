mod common;

use std::sync::OnceLock;

use rrhoc::certify::{certify, CertifyOptions};
use rrhoc::cli::Setup;
use rrhoc::lmi::NetworkContext;
use rrhoc::observer::{performance_ratio, simulate};
use rrhoc::plant::Scenario;
use rrhoc::solver::{synthesize, ScalarGrid, SynthesisResult};
use rrhoc::Error;

const GAMMA: f64 = 0.3;

/// Fixture over a 20 s horizon with its gains synthesized at `GAMMA` on the
/// grid point that minimizes γ.
fn shared() -> &'static (Setup, SynthesisResult) {
    static CELL: OnceLock<(Setup, SynthesisResult)> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = common::fixture();
        let mut config = base.config.clone();
        config.schedule.horizon = Some(20.0);
        config.grid = ScalarGrid {
            alphas: vec![1.0],
            pi_fractions: vec![0.5],
            epsilons: vec![0.1],
        };
        let s = Setup::from_config(config, base.base_dir.clone()).unwrap();
        let net = NetworkContext::new(
            &s.model,
            &s.graph,
            &s.schedule.delay_bounds(&s.graph).unwrap(),
        )
        .unwrap();
        let result = synthesize(&net, GAMMA, &s.config.grid, &s.config.budget).unwrap();
        (s, result)
    })
}

fn options() -> CertifyOptions {
    CertifyOptions {
        lyapunov_stride: Some(20),
        ..CertifyOptions::default()
    }
}

#[test]
fn synthesized_gains_certify() {
    let (s, result) = shared();
    let battery = s
        .battery(3)
        .unwrap()
        .into_iter()
        .take(3)
        .collect::<Vec<_>>();
    let report = certify(
        &s.model,
        &s.graph,
        &s.schedule,
        result,
        &battery,
        &options(),
    )
    .unwrap();
    assert!(report.passed, "{}", report.statement);
    assert!(report.analysis_verified && report.analysis_max_eigenvalue < 0.0);
    assert!(report.stability.passed);
    assert!(report.performance.max_ratio <= report.performance.bound);
    assert_eq!(
        report.statement,
        "no violation found over battery of 3 scenarios"
    );
    assert_eq!(report.lyapunov.as_ref().map(|l| l.passed), Some(true));
}

#[test]
fn flipped_output_injection_fails_stability() {
    let (s, result) = shared();
    let mut flipped = result.clone();
    for g in &mut flipped.gains {
        g.l = -&g.l;
    }
    let battery = s
        .battery(3)
        .unwrap()
        .into_iter()
        .take(2)
        .collect::<Vec<_>>();
    let report = certify(
        &s.model,
        &s.graph,
        &s.schedule,
        &flipped,
        &battery,
        &CertifyOptions {
            lyapunov_stride: None,
            ..options()
        },
    )
    .unwrap();
    assert!(!report.passed);
    assert!(!report.stability.passed);
    assert!(report.stability.decay_rate.unwrap() < 0.0);
    assert!(report.stability.worst_final_error_ratio > 1.0);
    assert!(!report.analysis_verified);
    assert!(
        report.statement.starts_with("certification failed"),
        "{}",
        report.statement
    );
}

#[test]
fn ratio_is_invariant_to_disturbance_scale_from_rest() {
    let (s, result) = shared();
    let mut scenario = s.battery(5).unwrap().remove(1);
    scenario.x0.fill(0.0);
    let ratio = |sc: &Scenario| {
        let trace = simulate(&s.model, &s.graph, &s.schedule, &result.gains, sc, 2e-3).unwrap();
        performance_ratio(&trace, &s.graph, &result.p_matrix).unwrap()
    };
    let base = ratio(&scenario);
    assert!(base > 0.0 && base <= GAMMA * GAMMA);
    for c in [0.1, 3.0, 40.0] {
        let scaled = ratio(&scenario.scaled(c));
        assert!(
            (scaled - base).abs() <= 1e-9 * base,
            "c = {c}: {scaled} vs {base}"
        );
    }
}

#[test]
fn invalid_batteries_and_schedules_are_rejected() {
    let (s, result) = shared();
    let nominal = s.battery(1).unwrap().remove(0);
    let disturbed = s.battery(1).unwrap().remove(1);
    let run = |battery: &[Scenario], schedule| {
        certify(&s.model, &s.graph, schedule, result, battery, &options())
    };
    assert!(matches!(
        run(&[], &s.schedule),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        run(&[disturbed], &s.schedule),
        Err(Error::InvalidArgument(_))
    ));
    // a longer step than the certified delay bound
    let slow = s.schedule_with_step(0.2).unwrap();
    assert!(matches!(
        run(&[nominal], &slow),
        Err(Error::InvalidArgument(_))
    ));
}
