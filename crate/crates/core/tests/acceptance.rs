//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use ladder_sim::experiments::{self, mhz_to_rad_per_ns, ExperimentKind, ExperimentSpec, GrapeProblem, GrapeRow};
use ladder_sim::fidelity::{apply_ideal, ensemble_fidelity, state_fidelity, trace_cost, FidelityMetric, IdealGateSpec};
use ladder_sim::grape::{gradient_check, optimize_model, resilience_sweep, CostFunction, GrapeConfig, GrapeSettings, GrapeTarget};
use ladder_sim::hamiltonian::{sample_disorder, DisorderMode, DisorderRealization, PhysicalParams, RwaModel};
use ladder_sim::lattice::{build_chain, build_ladder, ladder_qubit_count, LadderLayout, Species};
use ladder_sim::propagate::{apply_operator, evolve_state, evolve_unitary, evolve_unitary_model, unitarity_defect};
use ladder_sim::protocols::{Protocol, ProtocolId};
use ladder_sim::pulses::{schedule_to_controls, ControlMatrix, PulseSchedule, PulseSegment, PulseWindow};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const P_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn(&mut Shared) -> Outcome;

/// GRAPE results reused by later criteria.
#[derive(Default)]
struct Shared {
    cz_controls: Option<ControlMatrix>,
}

fn basis(d: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); d];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

fn random_controls(m: usize, slot: f64, seed: u64, scale: f64) -> ControlMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut c = ControlMatrix::zeros(m, slot);
    for col in &mut c.columns {
        for u in col.iter_mut() {
            *u = rng.random_range(-scale..scale);
        }
    }
    c
}

fn structure(_: &mut Shared) -> Outcome {
    let counts: Vec<usize> = (1..=6).map(|n| build_ladder(n).unwrap().n_qubits()).collect();
    let expected: Vec<usize> = (1..=6).map(|n| 2 * n * n + 4 * n - 1).collect();
    let formula: Vec<usize> = (1..=6).map(ladder_qubit_count).collect();
    outcome(counts == expected && formula == expected && counts[1] == 15, format!("counts {counts:?}"))
}

/// Worst basis-state fidelity of a B π-pulse on ABA against the blockade map.
fn aba_infidelity(eta: f64) -> f64 {
    let l = build_chain(&[Species::A, Species::B, Species::A]).unwrap();
    let p = PhysicalParams::standard(eta).unwrap();
    let seg = PulseSegment::rotation(&p, Species::B, 0.0, PI);
    let schedule = PulseSchedule::new("pi_b", vec![PulseWindow::single(seg)]);
    let duration = schedule.duration();
    let controls = schedule_to_controls(&schedule, duration / (duration / 2.5).ceil()).unwrap();
    let x = evolve_unitary(&l, &p, &DisorderRealization::zero(&l), &controls).unwrap();
    let spec = IdealGateSpec::primitive(Species::B, PI, 0.0);
    (0..8)
        .map(|k| {
            let mut ideal = basis(8, k);
            apply_ideal(&l, &spec, &mut ideal);
            1.0 - state_fidelity(&ideal, &apply_operator(&x, &basis(8, k))).unwrap()
        })
        .fold(0.0, f64::max)
}

fn blockade_limit(_: &mut Shared) -> Outcome {
    let inf: Vec<f64> = [20.0, 100.0, 500.0].iter().map(|&e| aba_infidelity(e)).collect();
    let pass = 1.0 - inf[0] >= 0.99 && inf[0] > inf[1] && inf[1] > inf[2];
    outcome(
        pass,
        format!(
            "F(20) {:.6}, infidelity at 20/100/500: {:.2e} {:.2e} {:.2e}",
            1.0 - inf[0],
            inf[0],
            inf[1],
            inf[2]
        ),
    )
}

fn zero_disorder(_: &mut Shared) -> Outcome {
    let params = PhysicalParams::standard(20.0).unwrap();
    let mut worst = Vec::new();
    for id in [ProtocolId::InfoFlowB, ProtocolId::Hadamard, ProtocolId::Cz] {
        let proto = Protocol::standard(id, &params).unwrap();
        let controls = proto.naive_controls(proto.natural_slot(2.5)).unwrap();
        let zero = DisorderRealization::zero(&proto.layout);
        let r = ensemble_fidelity(&proto, &params, &controls, &P_GRID, 0.0, &[zero], FidelityMetric::PerRealization).unwrap();
        worst.push((id, r.entries.iter().map(|e| e.fidelity).fold(1.0, f64::min)));
    }
    let pass = worst.iter().all(|w| w.1 >= 0.98);
    outcome(pass, format!("min over p: {}", fmt_pairs(&worst)))
}

fn fmt_pairs(v: &[(ProtocolId, f64)]) -> String {
    v.iter().map(|(id, f)| format!("{id} {f:.4}")).collect::<Vec<_>>().join(", ")
}

fn sweep_spec(protocols: Vec<ProtocolId>, modes: Vec<DisorderMode>, epsilons: Vec<f64>, n_samples: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        kind: ExperimentKind::DisorderSweep,
        n_samples,
        ..Default::default()
    };
    spec.sweep.protocols = protocols;
    spec.sweep.modes = modes;
    spec.sweep.epsilons = epsilons;
    spec
}

/// At N = 20 the averaged-state fidelity carries a residue of order
/// rms|c|/√20, so single draws scatter; the check uses the mean of ten
/// independent 20-sample ensembles and reports the worst one.
fn disorder_collapse(_: &mut Shared) -> Outcome {
    let ids = [ProtocolId::InfoFlowB, ProtocolId::InfoFlowA, ProtocolId::Hadamard, ProtocolId::Cz];
    let mut per_seed: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for seed in 1..=10 {
        let mut spec = sweep_spec(ids.to_vec(), vec![DisorderMode::OmegaOnly], vec![0.02], 20);
        spec.seed = seed;
        for (i, p) in experiments::disorder_sweep_points(&spec).unwrap().iter().enumerate() {
            per_seed[i].push(p.report.as_ref().map_or(f64::NAN, |r| r.mean));
        }
    }
    let means: Vec<(ProtocolId, f64)> = ids.iter().zip(&per_seed).map(|(&id, v)| (id, v.iter().sum::<f64>() / v.len() as f64)).collect();
    let worst: Vec<(ProtocolId, f64)> = ids.iter().zip(&per_seed).map(|(&id, v)| (id, v.iter().cloned().fold(0.0, f64::max))).collect();
    outcome(
        means.iter().all(|x| x.1 < 0.25),
        format!("mean F at 2%: {}; worst draw: {}", fmt_pairs(&means), fmt_pairs(&worst)),
    )
}

/// Both comparisons use a two-stderr band; once both curves sit at the
/// finite-sample floor their ordering is noise.
fn hierarchy(_: &mut Shared) -> Outcome {
    let ids = [ProtocolId::InfoFlowB, ProtocolId::Hadamard, ProtocolId::Cz];
    let base = ExperimentSpec::default();
    let epsilons = base.sweep.epsilons.clone();
    let spec = sweep_spec(ids.to_vec(), DisorderMode::ALL.to_vec(), epsilons.clone(), 40);
    let points = experiments::disorder_sweep_points(&spec).unwrap();
    let get = |id, mode, eps| {
        points
            .iter()
            .find(|p| p.protocol == id && p.mode == mode && p.epsilon == eps)
            .and_then(|p| p.report.clone())
            .unwrap()
    };
    let mut fails = Vec::new();
    let (mut strict, mut total) = (0, 0);
    let mut worst_gap: f64 = 0.0;
    for id in ids {
        for &eps in epsilons.iter().filter(|&&e| e > 0.0) {
            let (w, z, b) = (
                get(id, DisorderMode::OmegaOnly, eps),
                get(id, DisorderMode::ZetaOnly, eps),
                get(id, DisorderMode::Both, eps),
            );
            total += 1;
            if w.mean <= z.mean {
                strict += 1;
            } else if w.mean > z.mean + 2.0 * (w.stderr.powi(2) + z.stderr.powi(2)).sqrt() {
                fails.push(format!("{id} ε={eps}: ω {:.4} > ζ {:.4}", w.mean, z.mean));
            }
            let tol = 2.0 * (w.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            let gap = (w.mean - b.mean).abs();
            if gap > 0.0 {
                worst_gap = worst_gap.max(gap / tol);
            }
            if gap > tol {
                fails.push(format!("{id} ε={eps}: |ω−both| {gap:.4} > {tol:.4}"));
            }
        }
    }
    let detail = if fails.is_empty() {
        format!("ω ≤ ζ strictly at {strict}/{total} points, rest within band; largest |ω−both| is {worst_gap:.2} of the band")
    } else {
        fails.join("; ")
    };
    outcome(fails.is_empty(), detail)
}

/// Targets reached from perturbed controls keep the check away from the
/// optimum, where the cost is flat and differences are roundoff.
fn gradient_problem(l: &LadderLayout, m: usize) -> (RwaModel, ControlMatrix, GrapeTarget, GrapeTarget) {
    let params = PhysicalParams::standard(5.0).unwrap();
    let dis = sample_disorder(l, &params, 0.02, 3, DisorderMode::Both).unwrap();
    let model = RwaModel::new(l, &params, &dis).unwrap();
    let c = random_controls(m, 5.0, 11, 0.7);
    let mut shifted = c.clone();
    let pert = random_controls(m, 5.0, 12, 0.3);
    for (a, b) in shifted.columns.iter_mut().zip(&pert.columns) {
        for j in 0..6 {
            a[j] += b[j];
        }
    }
    let d = l.dim();
    let xt = evolve_unitary_model(&model, &shifted).unwrap();
    let inits: Vec<Vec<Complex64>> = [0, 1, d / 2 + 3].iter().map(|&k| basis(d, k)).collect();
    let targets = inits.iter().map(|v| apply_operator(&xt, v)).collect();
    (
        model,
        c,
        GrapeTarget::States {
            initial: inits,
            target: targets,
        },
        GrapeTarget::Unitary(xt),
    )
}

fn gradient(_: &mut Shared) -> Outcome {
    let params = PhysicalParams::standard(5.0).unwrap();
    let row7 = Protocol::standard(ProtocolId::InfoFlowB, &params).unwrap().layout;
    let aba = build_chain(&[Species::A, Species::B, Species::A]).unwrap();
    let mut errs = Vec::new();
    for (name, l, m) in [("aba", &aba, 30), ("row7", &row7, 12)] {
        let (model, c, states, unitary) = gradient_problem(l, m);
        for (mode, t) in [("state", &states), ("unitary", &unitary)] {
            let f = CostFunction::new(&model, t).unwrap();
            let g = gradient_check(&f, &c, 50, 1e-6, 5).unwrap();
            errs.push((format!("{name}/{mode}"), g.max_relative_error));
        }
    }
    let pass = errs.iter().all(|e| e.1 < 1e-6);
    outcome(pass, errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", "))
}

fn grape_spec() -> ExperimentSpec {
    ExperimentSpec {
        kind: ExperimentKind::GrapeTable,
        ..Default::default()
    }
}

fn grape_recovery(shared: &mut Shared) -> Outcome {
    let spec = grape_spec();
    let mut parts = Vec::new();
    let mut pass = true;
    for (id, threshold) in [(ProtocolId::InfoFlowB, 0.97), (ProtocolId::Cz, 0.99)] {
        let row = GrapeRow {
            protocol: id,
            eta_br: Some(20.0),
            time_scale: 1.0,
        };
        let (o, r) = experiments::grape_row(&spec, &row).unwrap();
        let f = o.optimized.as_ref().map_or(0.0, |r| r.mean);
        pass &= f >= threshold && o.iterations <= 2000;
        parts.push(format!("{id} naive {:.4} -> {f:.4} in {} iterations", o.naive.mean, o.iterations));
        if id == ProtocolId::Cz {
            shared.cz_controls = r.map(|r| r.controls);
        }
    }
    outcome(pass, parts.join(", "))
}

fn reduced_time(_: &mut Shared) -> Outcome {
    let row = GrapeRow {
        protocol: ProtocolId::Hadamard,
        eta_br: Some(20.0),
        time_scale: 0.5,
    };
    let (o, _) = experiments::grape_row(&grape_spec(), &row).unwrap();
    let f = o.optimized.as_ref().map_or(0.0, |r| r.mean);
    outcome(f >= 0.98, format!("{:.1} ns, F {f:.4} in {} iterations", o.duration_ns, o.iterations))
}

fn resilience(shared: &mut Shared) -> Outcome {
    let spec = grape_spec();
    let row = GrapeRow {
        protocol: ProtocolId::Cz,
        eta_br: Some(20.0),
        time_scale: 1.0,
    };
    let problem = GrapeProblem::new(&spec, &row).unwrap();
    let controls = match shared.cz_controls.take() {
        Some(c) => c,
        None => problem.optimize().unwrap().controls,
    };
    let spreads = spec.resilience.spreads.clone();
    let reports = resilience_sweep(
        &problem.protocol,
        &problem.params,
        &controls,
        &problem.disorder,
        &spreads,
        spec.n_samples,
        spec.seed,
        &spec.p_grid,
        spec.phi,
    )
    .unwrap();
    let f: Vec<(f64, f64)> = reports.iter().map(|r| (r.mean, r.stderr)).collect();
    let monotone = f.windows(2).all(|w| w[1].0 <= w[0].0 + w[0].1 + w[1].1);
    let at_1mhz = spreads.iter().position(|&s| (s - mhz_to_rad_per_ns(1.0)).abs() < 1e-12).unwrap();
    let drop = f[0].0 - f[at_1mhz].0;
    let curve = f.iter().map(|x| format!("{:.3}", x.0)).collect::<Vec<_>>().join(" ");
    outcome(monotone && drop >= 0.2, format!("F over spreads [{curve}], drop by 1 MHz {drop:.3}"))
}

fn hygiene(_: &mut Shared) -> Outcome {
    let mut fails = Vec::new();
    // long chains
    let params = PhysicalParams::standard(20.0).unwrap();
    let chain = build_chain(&[Species::A, Species::B, Species::C, Species::A]).unwrap();
    let dis = sample_disorder(&chain, &params, 0.02, 7, DisorderMode::Both).unwrap();
    let long = random_controls(10_000, 2.5, 21, 1.0);
    let x = evolve_unitary(&chain, &params, &dis, &long).unwrap();
    let defect = unitarity_defect(&x);
    if defect >= 1e-10 {
        fails.push(format!("unitarity {defect:.1e}"));
    }
    let proto = Protocol::standard(ProtocolId::InfoFlowB, &params).unwrap();
    let row_dis = sample_disorder(&proto.layout, &params, 0.02, 7, DisorderMode::Both).unwrap();
    let psi = proto.initial_state(0.3, 0.4).unwrap();
    let drift = evolve_state(&psi, &proto.layout, &params, &row_dis, &long).unwrap().norm_drift;
    if drift >= 1e-10 {
        fails.push(format!("norm drift {drift:.1e}"));
    }

    // global phases: quarter turns are exact in floating point
    let target = proto.target_state(&params, 0.3, 0.4).unwrap();
    let f0 = state_fidelity(&target, &psi).unwrap();
    let cost0 = trace_cost(&x, &x.map(|z| z * Complex64::new(0.6, 0.8))).unwrap();
    for phase in [Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)] {
        let rotated: Vec<Complex64> = psi.iter().map(|z| z * phase).collect();
        if state_fidelity(&target, &rotated).unwrap() != f0 {
            fails.push(format!("state fidelity changed under phase {phase}"));
        }
        if trace_cost(&x, &x.map(|z| z * Complex64::new(0.6, 0.8) * phase)).unwrap() != cost0 {
            fails.push(format!("trace cost changed under phase {phase}"));
        }
    }
    let generic = Complex64::from_polar(1.0, 0.917);
    let rotated: Vec<Complex64> = psi.iter().map(|z| z * generic).collect();
    let generic_err = (state_fidelity(&target, &rotated).unwrap() - f0).abs();
    if generic_err > 1e-15 {
        fails.push(format!("generic phase changes fidelity by {generic_err:.1e}"));
    }

    // byte-stable outputs across runs and thread counts
    let spec = sweep_spec(vec![ProtocolId::Cz], DisorderMode::ALL.to_vec(), vec![0.0, 1e-3, 2e-2], 4);
    let run_in = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let m = pool.install(|| experiments::run(&spec, dir.path())).unwrap();
        let files: Vec<(String, Vec<u8>)> = m
            .outputs
            .iter()
            .filter(|f| f.ends_with(".csv"))
            .map(|f| (f.clone(), fs::read(dir.path().join(f)).unwrap()))
            .collect();
        files
    };
    let (a, b) = (run_in(1), run_in(3));
    if a.is_empty() || a != b {
        fails.push("sweep outputs differ between runs".into());
    }
    let mut model_spec = grape_spec();
    model_spec.grape.settings = GrapeSettings {
        max_iters: 3,
        init_jitter: 0.05,
        ..model_spec.grape.settings
    };
    let row = GrapeRow {
        protocol: ProtocolId::Cz,
        eta_br: Some(20.0),
        time_scale: 1.0,
    };
    let problem = GrapeProblem::new(&model_spec, &row).unwrap();
    let model = RwaModel::new(&problem.protocol.layout, &problem.params, &problem.disorder).unwrap();
    let config = GrapeConfig {
        target: problem.config.target.clone(),
        settings: model_spec.grape.settings.clone(),
    };
    let r1 = optimize_model(&model, &problem.initial, &config).unwrap();
    let r2 = optimize_model(&model, &problem.initial, &config).unwrap();
    if r1.controls.to_json().unwrap() != r2.controls.to_json().unwrap() || r1.cost_trajectory != r2.cost_trajectory {
        fails.push("GRAPE runs differ".into());
    }

    let detail = if fails.is_empty() {
        format!(
            "unitarity {defect:.1e}, drift {drift:.1e}, quarter-turn phases bit-exact, generic phase {generic_err:.0e}, {} output files identical",
            a.len()
        )
    } else {
        fails.join("; ")
    };
    outcome(fails.is_empty(), detail)
}

fn main() -> ExitCode {
    let checks: [(&str, &str, f64, Check); 10] = [
        ("1", "ladder qubit counts", 1.0, structure),
        ("2", "blockade limit on ABA", 10.0, blockade_limit),
        ("3", "zero-disorder naive protocols >= 0.98", 60.0, zero_disorder),
        ("4", "naive F < 0.25 at 2% omega-disorder", 600.0, disorder_collapse),
        ("5", "omega <= zeta, omega ~ both", 900.0, hierarchy),
        ("6", "gradient vs central differences < 1e-6", 60.0, gradient),
        ("7", "GRAPE recovery IF(B) >= 0.97, CZ >= 0.99", 7200.0, grape_recovery),
        ("8", "halved Hadamard >= 0.98", 7200.0, reduced_time),
        ("9", "resilience drop", 1800.0, resilience),
        ("10", "numerical hygiene", 300.0, hygiene),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, budget, check) in checks {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let o = check(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < budget;
        if !pass {
            failed += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id:>2}: {name} | {} | {secs:.1}s (budget {budget:.0}s)", o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
