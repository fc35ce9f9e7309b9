//! Config-driven studies: disorder sweeps, GRAPE tables, resilience curves
//! and reduced-time runs, with their CSV/JSON outputs and a run manifest.
//!
//! Random streams all derive from the top-level `seed`:
//! - disorder-sweep sample `s` is ChaCha20 stream `s` of `seed`, shared by
//!   every ε and mode so curves use common random numbers;
//! - the GRAPE realization is stream 0 of `grape.disorder_seed` (default `seed`);
//! - resilience sample `s` is stream 2⁶³ + `s` of `seed`;
//! - GRAPE warm-start jitter is stream 0 of `grape.settings.seed`.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fidelity::{ensemble_fidelity, ensemble_overlaps, ideal_apply_schedule, uniform_grid, FidelityMetric, FidelityReport};
use crate::grape::{compress_controls, optimize, resilience_sweep, CostMode, GrapeConfig, GrapeResult, GrapeSettings, GrapeTarget, Termination};
use crate::hamiltonian::{sample_disorder, sample_disorder_stream, DisorderMode, DisorderRealization, OperatorMatrix, PhysicalParams};
use crate::protocols::{LayoutChoice, Protocol, ProtocolId};
use crate::pulses::ControlMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DisorderSweep,
    GrapeTable,
    Resilience,
    ReducedTime,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DisorderSweep => "disorder_sweep",
            ExperimentKind::GrapeTable => "grape_table",
            ExperimentKind::Resilience => "resilience",
            ExperimentKind::ReducedTime => "reduced_time",
        }
    }
}

/// Top-level experiment file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n_samples: usize,
    pub p_grid: Vec<f64>,
    pub phi: f64,
    /// Upper bound on the uniform slot; the naive schedule picks the largest
    /// slot below it on which its segments fit exactly.
    pub max_slot: f64,
    pub omega_bar: f64,
    pub zeta_bar: f64,
    /// Default η_BR for rows that do not set their own.
    pub eta_br: f64,
    /// Layout override for every protocol; `None` uses each protocol's own.
    pub layout: Option<LayoutChoice>,
    pub sweep: SweepSpec,
    pub grape: GrapeSpec,
    pub resilience: ResilienceSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::DisorderSweep,
            seed: 1,
            n_samples: 200,
            p_grid: uniform_grid(11),
            phi: 0.0,
            max_slot: 2.5,
            omega_bar: 7.0,
            zeta_bar: 0.2,
            eta_br: 20.0,
            layout: None,
            sweep: SweepSpec::default(),
            grape: GrapeSpec::default(),
            resilience: ResilienceSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub protocols: Vec<ProtocolId>,
    pub modes: Vec<DisorderMode>,
    pub epsilons: Vec<f64>,
    pub metric: FidelityMetric,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let mut epsilons = vec![0.0];
        epsilons.extend((0..10).map(|k| 10f64.powf(-5.0 + 3.0 * k as f64 / 9.0)));
        epsilons.push(0.02);
        Self {
            protocols: vec![ProtocolId::InfoFlowB, ProtocolId::InfoFlowA],
            modes: DisorderMode::ALL.to_vec(),
            epsilons,
            metric: FidelityMetric::AveragedState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrapeRow {
    pub protocol: ProtocolId,
    #[serde(default)]
    pub eta_br: Option<f64>,
    #[serde(default = "one")]
    pub time_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrapeSpec {
    pub rows: Vec<GrapeRow>,
    pub epsilon: f64,
    pub disorder_seed: Option<u64>,
    pub mode: DisorderMode,
    pub cost_mode: CostMode,
    /// Initial-state amplitudes p of the state-set training pairs.
    pub training_p: Vec<f64>,
    pub settings: GrapeSettings,
}

impl Default for GrapeSpec {
    fn default() -> Self {
        Self {
            rows: vec![],
            epsilon: 0.02,
            disorder_seed: None,
            mode: DisorderMode::OmegaOnly,
            cost_mode: CostMode::StateSet,
            training_p: vec![0.0, 0.33, 0.66],
            settings: GrapeSettings {
                tolerance: 2e-3,
                ..GrapeSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResilienceSpec {
    pub protocol: ProtocolId,
    pub eta_br: Option<f64>,
    /// Standard deviations of δω₁, rad/ns.
    pub spreads: Vec<f64>,
    /// Optimized controls to freeze; GRAPE runs first when absent.
    pub controls: Option<PathBuf>,
}

impl Default for ResilienceSpec {
    fn default() -> Self {
        Self {
            protocol: ProtocolId::Cz,
            eta_br: None,
            spreads: [0.0, 0.1, 0.2, 0.5, 1.0, 2.0].iter().map(|mhz| mhz_to_rad_per_ns(*mhz)).collect(),
            controls: None,
        }
    }
}

pub fn mhz_to_rad_per_ns(f: f64) -> f64 {
    2.0 * PI * f * 1e-3
}

pub fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI) * 1e3
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if self.p_grid.is_empty() || self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("p_grid must be nonempty with values in [0, 1]".into()));
        }
        if self.sweep.epsilons.iter().any(|e| !(*e >= 0.0)) || !(self.grape.epsilon >= 0.0) {
            return Err(Error::Config("epsilon values must be >= 0".into()));
        }
        if self.resilience.spreads.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("spreads must be >= 0".into()));
        }
        if self.grape.rows.iter().any(|r| !(r.time_scale > 0.0 && r.time_scale <= 1.0)) {
            return Err(Error::Config("time_scale must lie in (0, 1]".into()));
        }
        if self.grape.training_p.is_empty() {
            return Err(Error::Config("training_p must be nonempty".into()));
        }
        self.params(self.eta_br)?;
        for row in &self.grape.rows {
            self.params(row.eta_br.unwrap_or(self.eta_br))?;
            self.protocol(row.protocol, &self.params(row.eta_br.unwrap_or(self.eta_br))?)?;
        }
        for &id in &self.sweep.protocols {
            self.protocol(id, &self.params(self.eta_br)?)?;
        }
        Ok(())
    }

    pub fn params(&self, eta_br: f64) -> Result<PhysicalParams> {
        PhysicalParams::new(self.omega_bar, self.zeta_bar, eta_br)
    }

    pub fn protocol(&self, id: ProtocolId, params: &PhysicalParams) -> Result<Protocol> {
        Protocol::new(id, params, self.layout.unwrap_or(id.default_layout()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rows for the kind, falling back to the built-in tables when empty.
    pub fn grape_rows(&self) -> Vec<GrapeRow> {
        if !self.grape.rows.is_empty() {
            return self.grape.rows.clone();
        }
        let row = |protocol, eta: f64, time_scale| GrapeRow {
            protocol,
            eta_br: Some(eta),
            time_scale,
        };
        match self.kind {
            ExperimentKind::ReducedTime => [20.0, 5.0]
                .iter()
                .flat_map(|&eta| [row(ProtocolId::Hadamard, eta, 0.5), row(ProtocolId::InfoFlowA, eta, 0.5)])
                .collect(),
            _ => [20.0, 5.0]
                .iter()
                .flat_map(|&eta| {
                    [ProtocolId::InfoFlowB, ProtocolId::InfoFlowA, ProtocolId::Hadamard, ProtocolId::Cz]
                        .into_iter()
                        .map(move |p| row(p, eta, 1.0))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub spec_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub wall_clock_secs: f64,
    /// Output files relative to the output directory; excludes the manifest.
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: vec![],
        })
    }

    fn create(&mut self, name: &str) -> Result<fs::File> {
        self.files.push(name.to_string());
        Ok(fs::File::create(self.dir.join(name))?)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.files.push(name.to_string());
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn finish(self, spec: &ExperimentSpec, seeds: Vec<u64>, start: Instant) -> Result<RunManifest> {
        let manifest = RunManifest {
            kind: spec.kind,
            spec_hash: spec.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            threads: rayon::current_num_threads(),
            wall_clock_secs: start.elapsed().as_secs_f64(),
            outputs: self.files,
        };
        fs::write(self.dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

/// Runs the experiment named by `spec.kind` and writes into `out`.
pub fn run(spec: &ExperimentSpec, out: &Path) -> Result<RunManifest> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::DisorderSweep => run_disorder_sweep(spec, out),
        ExperimentKind::GrapeTable => run_grape_table(spec, out),
        ExperimentKind::Resilience => run_resilience(spec, out),
        ExperimentKind::ReducedTime => run_reduced_time(spec, out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub protocol: ProtocolId,
    pub mode: DisorderMode,
    pub epsilon: f64,
    /// Report under the configured metric.
    pub report: Option<FidelityReport>,
    /// Mean and stderr of the per-realization fidelity, for reference.
    pub per_realization: Option<(f64, f64)>,
    pub error: Option<String>,
}

/// Naive-protocol fidelity for every (protocol, mode, ε). A failing point is
/// recorded and the sweep continues.
pub fn disorder_sweep_points(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    let params = spec.params(spec.eta_br)?;
    let mut points = Vec::new();
    for &id in &spec.sweep.protocols {
        let protocol = spec.protocol(id, &params)?;
        let controls = protocol.naive_controls(protocol.natural_slot(spec.max_slot))?;
        for &mode in &spec.sweep.modes {
            for &epsilon in &spec.sweep.epsilons {
                let point = sweep_point(spec, &protocol, &params, &controls, mode, epsilon);
                points.push(match point {
                    Ok((report, pr)) => SweepPoint {
                        protocol: id,
                        mode,
                        epsilon,
                        report: Some(report),
                        per_realization: Some(pr),
                        error: None,
                    },
                    Err(e) => SweepPoint {
                        protocol: id,
                        mode,
                        epsilon,
                        report: None,
                        per_realization: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
    }
    Ok(points)
}

fn sweep_point(
    spec: &ExperimentSpec,
    protocol: &Protocol,
    params: &PhysicalParams,
    controls: &ControlMatrix,
    mode: DisorderMode,
    epsilon: f64,
) -> Result<(FidelityReport, (f64, f64))> {
    let reals: Vec<DisorderRealization> = (0..spec.n_samples as u64)
        .map(|s| sample_disorder_stream(&protocol.layout, params, epsilon, spec.seed, s, mode))
        .collect::<Result<_>>()?;
    let samples = ensemble_overlaps(protocol, params, controls, &spec.p_grid, spec.phi, &reals)?;
    let pr = samples.report(protocol.id.name(), FidelityMetric::PerRealization);
    Ok((samples.report(protocol.id.name(), spec.sweep.metric), (pr.mean, pr.stderr)))
}

pub fn run_disorder_sweep(spec: &ExperimentSpec, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let points = disorder_sweep_points(spec)?;
    for &id in &spec.sweep.protocols {
        for &mode in &spec.sweep.modes {
            let name = format!("sweep_{}_{}.csv", id.name(), mode.name());
            let mut w = csv::Writer::from_writer(outputs.create(&name)?);
            w.write_record(["epsilon", "p", "phi", "fidelity", "stderr", "n_samples", "protocol", "seed"])?;
            for pt in points.iter().filter(|p| p.protocol == id && p.mode == mode) {
                if let Some(r) = &pt.report {
                    let mut buf = Vec::new();
                    r.write_csv(&mut buf)?;
                    let mut rd = csv::Reader::from_reader(buf.as_slice());
                    for rec in rd.records() {
                        w.write_record(&rec?)?;
                    }
                }
            }
            w.flush()?;
        }
    }
    let mut w = csv::Writer::from_writer(outputs.create("sweep_summary.csv")?);
    w.write_record([
        "protocol",
        "mode",
        "epsilon",
        "metric",
        "mean",
        "stderr",
        "per_realization_mean",
        "per_realization_stderr",
        "n_samples",
        "error",
    ])?;
    for pt in &points {
        let (mean, stderr) = pt.report.as_ref().map(|r| (fmt(r.mean), fmt(r.stderr))).unwrap_or_default();
        let (pm, ps) = pt.per_realization.map(|(m, s)| (fmt(m), fmt(s))).unwrap_or_default();
        w.write_record([
            pt.protocol.name().to_string(),
            pt.mode.name().to_string(),
            format!("{}", pt.epsilon),
            spec.sweep.metric.name().to_string(),
            mean,
            stderr,
            pm,
            ps,
            spec.n_samples.to_string(),
            pt.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    outputs.finish(spec, vec![spec.seed], start)
}

fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

/// Everything needed to optimize one protocol on one realization.
#[derive(Debug, Clone)]
pub struct GrapeProblem {
    pub protocol: Protocol,
    pub params: PhysicalParams,
    pub disorder: DisorderRealization,
    /// Naive schedule on the full-length grid.
    pub naive: ControlMatrix,
    /// Warm start on the (possibly compressed) optimization grid.
    pub initial: ControlMatrix,
    pub config: GrapeConfig,
}

impl GrapeProblem {
    pub fn new(spec: &ExperimentSpec, row: &GrapeRow) -> Result<Self> {
        let params = spec.params(row.eta_br.unwrap_or(spec.eta_br))?;
        let protocol = spec.protocol(row.protocol, &params)?;
        let disorder = sample_disorder(
            &protocol.layout,
            &params,
            spec.grape.epsilon,
            spec.grape.disorder_seed.unwrap_or(spec.seed),
            spec.grape.mode,
        )?;
        let naive = protocol.naive_controls(protocol.natural_slot(spec.max_slot))?;
        let initial = compress_controls(&naive, row.time_scale, spec.grape.settings.amplitude_bound)?;
        let target = match spec.grape.cost_mode {
            CostMode::StateSet => {
                let initial = spec
                    .grape
                    .training_p
                    .iter()
                    .map(|&p| protocol.initial_state(p, spec.phi))
                    .collect::<Result<_>>()?;
                let target = spec
                    .grape
                    .training_p
                    .iter()
                    .map(|&p| protocol.target_state(&params, p, spec.phi))
                    .collect::<Result<_>>()?;
                GrapeTarget::States { initial, target }
            }
            CostMode::Unitary => GrapeTarget::Unitary(ideal_schedule_unitary(&protocol, &params)),
        };
        Ok(Self {
            protocol,
            params,
            disorder,
            naive,
            initial,
            config: GrapeConfig {
                target,
                settings: spec.grape.settings.clone(),
            },
        })
    }

    pub fn optimize(&self) -> Result<GrapeResult> {
        optimize(&self.protocol.layout, &self.params, &self.disorder, &self.initial, &self.config)
    }
}

/// Ideal blockade-model propagator of the protocol's naive schedule.
pub fn ideal_schedule_unitary(protocol: &Protocol, params: &PhysicalParams) -> OperatorMatrix {
    let d = protocol.layout.dim();
    let mut x = OperatorMatrix::zeros(d, d);
    for c in 0..d {
        let mut e = vec![num_complex::Complex64::new(0.0, 0.0); d];
        e[c] = num_complex::Complex64::new(1.0, 0.0);
        ideal_apply_schedule(&protocol.layout, params, &protocol.schedule, &mut e);
        x.column_mut(c).iter_mut().zip(&e).for_each(|(a, b)| *a = *b);
    }
    x
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrapeRowOutcome {
    pub protocol: ProtocolId,
    pub eta_br: f64,
    pub time_scale: f64,
    pub duration_ns: f64,
    pub disorder: DisorderRealization,
    /// Naive schedule on the optimization realization.
    pub naive: FidelityReport,
    /// Naive schedule over `n_samples` fresh realizations.
    pub naive_ensemble: FidelityReport,
    pub optimized: Option<FidelityReport>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

/// Optimizes one row and evaluates naive and optimized controls.
pub fn grape_row(spec: &ExperimentSpec, row: &GrapeRow) -> Result<(GrapeRowOutcome, Option<GrapeResult>)> {
    let problem = GrapeProblem::new(spec, row)?;
    let GrapeProblem {
        protocol,
        params,
        disorder,
        naive,
        initial,
        ..
    } = &problem;
    let naive_fixed = ensemble_fidelity(
        protocol,
        params,
        naive,
        &spec.p_grid,
        spec.phi,
        std::slice::from_ref(disorder),
        FidelityMetric::PerRealization,
    )?;
    let reals: Vec<DisorderRealization> = (0..spec.n_samples as u64)
        .map(|s| sample_disorder_stream(&protocol.layout, params, spec.grape.epsilon, spec.seed, s, spec.grape.mode))
        .collect::<Result<_>>()?;
    let naive_ensemble = ensemble_fidelity(protocol, params, naive, &spec.p_grid, spec.phi, &reals, spec.sweep.metric)?;
    let mut outcome = GrapeRowOutcome {
        protocol: row.protocol,
        eta_br: params.eta_br,
        time_scale: row.time_scale,
        duration_ns: initial.total_duration(),
        disorder: disorder.clone(),
        naive: naive_fixed,
        naive_ensemble,
        optimized: None,
        iterations: 0,
        termination: None,
        error: None,
    };
    match problem.optimize() {
        Ok(result) => {
            let rep = ensemble_fidelity(
                protocol,
                params,
                &result.controls,
                &spec.p_grid,
                spec.phi,
                std::slice::from_ref(disorder),
                FidelityMetric::PerRealization,
            )?;
            outcome.optimized = Some(rep);
            outcome.iterations = result.iterations;
            outcome.termination = Some(result.termination.clone());
            Ok((outcome, Some(result)))
        }
        Err(e) => {
            outcome.error = Some(e.to_string());
            Ok((outcome, None))
        }
    }
}

/// Summary written next to the controls; omits wall-clock so reruns are
/// byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrapeSummary {
    pub protocol: ProtocolId,
    pub eta_br: f64,
    pub time_scale: f64,
    pub duration_ns: f64,
    pub disorder: DisorderRealization,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub non_monotonic_steps: usize,
    pub naive_fidelity: f64,
    pub optimized_fidelity: f64,
    pub optimized_state_std: f64,
}

fn row_stem(row: &GrapeRowOutcome) -> String {
    let mut stem = format!("grape_{}_eta{}", row.protocol.name(), row.eta_br);
    if row.time_scale != 1.0 {
        stem.push_str(&format!("_ts{}", row.time_scale));
    }
    stem
}

fn write_grape_artifacts(outputs: &mut Outputs, row: &GrapeRowOutcome, result: &GrapeResult) -> Result<()> {
    let stem = row_stem(row);
    outputs.write_text(&format!("{stem}_controls.json"), &result.controls.to_json()?)?;
    result.write_trajectory_csv(outputs.create(&format!("{stem}_trajectory.csv"))?)?;
    let opt = row.optimized.as_ref().expect("optimized report present");
    opt.write_csv(outputs.create(&format!("{stem}_fidelity.csv"))?)?;
    let summary = GrapeSummary {
        protocol: row.protocol,
        eta_br: row.eta_br,
        time_scale: row.time_scale,
        duration_ns: row.duration_ns,
        disorder: row.disorder.clone(),
        initial_cost: result.initial_cost,
        final_cost: result.final_cost,
        iterations: result.iterations,
        termination: result.termination.clone(),
        non_monotonic_steps: result.non_monotonic_steps,
        naive_fidelity: row.naive.mean,
        optimized_fidelity: opt.mean,
        optimized_state_std: opt.state_std,
    };
    outputs.write_text(&format!("{stem}_summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn write_table(outputs: &mut Outputs, name: &str, rows: &[GrapeRowOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(outputs.create(name)?);
    w.write_record([
        "protocol",
        "eta_br",
        "duration_ns",
        "time_scale",
        "naive_fidelity",
        "naive_state_std",
        "naive_ensemble_fidelity",
        "naive_ensemble_stderr",
        "grape_fidelity",
        "grape_state_std",
        "iterations",
        "termination",
        "error",
    ])?;
    for r in rows {
        let (gf, gs) = r.optimized.as_ref().map(|o| (fmt(o.mean), fmt(o.state_std))).unwrap_or_default();
        let term = r
            .termination
            .as_ref()
            .map(|t| match t {
                Termination::MaxIterations => "max_iterations".to_string(),
                Termination::Converged => "converged".to_string(),
                Termination::Diverged { .. } => "diverged".to_string(),
            })
            .unwrap_or_default();
        w.write_record([
            r.protocol.name().to_string(),
            format!("{}", r.eta_br),
            format!("{:.3}", r.duration_ns),
            format!("{}", r.time_scale),
            fmt(r.naive.mean),
            fmt(r.naive.state_std),
            fmt(r.naive_ensemble.mean),
            fmt(r.naive_ensemble.stderr),
            gf,
            gs,
            r.iterations.to_string(),
            term,
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_rows(spec: &ExperimentSpec, out: &Path, table: &str) -> Result<RunManifest> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let mut rows = Vec::new();
    for row in spec.grape_rows() {
        let (outcome, result) = grape_row(spec, &row)?;
        let stem = row_stem(&outcome);
        let protocol = spec.protocol(row.protocol, &spec.params(outcome.eta_br)?)?;
        outputs.write_text(&format!("{stem}_layout.json"), &protocol.layout.to_json()?)?;
        outputs.write_text(&format!("{stem}_schedule.json"), &protocol.schedule.to_json()?)?;
        outputs.write_text(&format!("{stem}_disorder.json"), &outcome.disorder.to_json()?)?;
        if let Some(result) = &result {
            write_grape_artifacts(&mut outputs, &outcome, result)?;
        }
        rows.push(outcome);
    }
    write_table(&mut outputs, table, &rows)?;
    let seeds = vec![spec.seed, spec.grape.disorder_seed.unwrap_or(spec.seed), spec.grape.settings.seed];
    outputs.finish(spec, seeds, start)
}

pub fn run_grape_table(spec: &ExperimentSpec, out: &Path) -> Result<RunManifest> {
    run_rows(spec, out, "grape_table.csv")
}

/// Optimizations on compressed time grids (default: H and IF(A) at half
/// duration for η_BR = 20 and 5).
pub fn run_reduced_time(spec: &ExperimentSpec, out: &Path) -> Result<RunManifest> {
    run_rows(spec, out, "reduced_time.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiliencePoint {
    pub spread: f64,
    pub spread_mhz: f64,
    /// Spread as a percentage of the static disorder scale ε·ω̄.
    pub percent_of_static: f64,
    pub report: FidelityReport,
}

/// Frozen-control fidelity under growing perturbations of the optimization
/// realization. Returns the points and, when GRAPE had to run, its result.
pub fn resilience_points(spec: &ExperimentSpec) -> Result<(Vec<ResiliencePoint>, Option<GrapeResult>)> {
    let row = GrapeRow {
        protocol: spec.resilience.protocol,
        eta_br: spec.resilience.eta_br,
        time_scale: 1.0,
    };
    let problem = GrapeProblem::new(spec, &row)?;
    let (controls, result) = match &spec.resilience.controls {
        Some(path) => (ControlMatrix::from_json(&fs::read_to_string(path)?)?, None),
        None => {
            let r = problem.optimize()?;
            (r.controls.clone(), Some(r))
        }
    };
    let reports = resilience_sweep(
        &problem.protocol,
        &problem.params,
        &controls,
        &problem.disorder,
        &spec.resilience.spreads,
        spec.n_samples,
        spec.seed,
        &spec.p_grid,
        spec.phi,
    )?;
    let static_scale = spec.grape.epsilon * spec.omega_bar;
    let points = spec
        .resilience
        .spreads
        .iter()
        .zip(reports)
        .map(|(&spread, report)| ResiliencePoint {
            spread,
            spread_mhz: rad_per_ns_to_mhz(spread),
            percent_of_static: if static_scale > 0.0 { 100.0 * spread / static_scale } else { f64::NAN },
            report,
        })
        .collect();
    Ok((points, result))
}

pub fn run_resilience(spec: &ExperimentSpec, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let (points, result) = resilience_points(spec)?;
    if let Some(r) = &result {
        let eta = spec.resilience.eta_br.unwrap_or(spec.eta_br);
        let stem = format!("grape_{}_eta{}", spec.resilience.protocol.name(), eta);
        outputs.write_text(&format!("{stem}_controls.json"), &r.controls.to_json()?)?;
        r.write_trajectory_csv(outputs.create(&format!("{stem}_trajectory.csv"))?)?;
    }
    let mut w = csv::Writer::from_writer(outputs.create("resilience.csv")?);
    w.write_record([
        "spread_rad_per_ns",
        "spread_mhz",
        "percent_of_static",
        "fidelity",
        "stderr",
        "n_samples",
        "protocol",
        "seed",
    ])?;
    for pt in &points {
        w.write_record([
            format!("{}", pt.spread),
            format!("{:.6}", pt.spread_mhz),
            format!("{:.6}", pt.percent_of_static),
            fmt(pt.report.mean),
            fmt(pt.report.stderr),
            pt.report.n_samples.to_string(),
            pt.report.protocol.clone(),
            spec.seed.to_string(),
        ])?;
    }
    w.flush()?;
    outputs.finish(spec, vec![spec.seed, spec.grape.disorder_seed.unwrap_or(spec.seed)], start)
}
