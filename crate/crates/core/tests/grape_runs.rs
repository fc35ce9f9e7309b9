use ladder_sim::experiments::{ExperimentKind, ExperimentSpec, GrapeProblem, GrapeRow};
use ladder_sim::fidelity::{ensemble_fidelity, FidelityMetric};
use ladder_sim::grape::{compress_controls, optimize, optimize_reduced_time, GrapeSettings, Termination};
use ladder_sim::protocols::ProtocolId;

fn problem(iters: usize) -> GrapeProblem {
    let mut spec = ExperimentSpec {
        kind: ExperimentKind::GrapeTable,
        ..Default::default()
    };
    spec.grape.settings = GrapeSettings {
        max_iters: iters,
        ..spec.grape.settings
    };
    let row = GrapeRow {
        protocol: ProtocolId::Cz,
        eta_br: Some(20.0),
        time_scale: 1.0,
    };
    GrapeProblem::new(&spec, &row).unwrap()
}

#[test]
fn warm_start_cost_matches_naive_fidelity() {
    let p = problem(1);
    let r = optimize(&p.protocol.layout, &p.params, &p.disorder, &p.initial, &p.config).unwrap();
    let training = ExperimentSpec::default().grape.training_p;
    let naive = ensemble_fidelity(
        &p.protocol,
        &p.params,
        &p.naive,
        &training,
        0.0,
        std::slice::from_ref(&p.disorder),
        FidelityMetric::PerRealization,
    )
    .unwrap();
    assert!(
        (r.initial_cost - (1.0 - naive.mean)).abs() < 1e-10,
        "{} vs {}",
        r.initial_cost,
        1.0 - naive.mean
    );
    assert_eq!(r.cost_trajectory[0], r.initial_cost);
}

#[test]
fn unit_time_scale_is_bit_exact() {
    let p = problem(3);
    assert_eq!(compress_controls(&p.naive, 1.0, 1.0).unwrap(), p.naive);
    let a = optimize(&p.protocol.layout, &p.params, &p.disorder, &p.initial, &p.config).unwrap();
    let b = optimize_reduced_time(&p.protocol.layout, &p.params, &p.disorder, &p.naive, &p.config, 1.0).unwrap();
    assert_eq!(a.controls, b.controls);
    assert_eq!(a.cost_trajectory, b.cost_trajectory);
}

#[test]
fn budget_exhaustion_is_reported() {
    let p = problem(2);
    let r = optimize(&p.protocol.layout, &p.params, &p.disorder, &p.initial, &p.config).unwrap();
    assert_eq!(r.iterations, 2);
    assert_eq!(r.termination, Termination::MaxIterations);
    assert!(r.final_cost <= r.initial_cost);
}
