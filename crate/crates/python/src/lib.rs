//! Python bindings: layouts, parameters, disorder, controls, protocols,
//! evolution, fidelity reports and GRAPE.

use std::path::PathBuf;

use ladder_sim::experiments::{self, ExperimentSpec};
use ladder_sim::fidelity::{self, FidelityMetric};
use ladder_sim::grape::{self, GrapeConfig, GrapeSettings, GrapeTarget};
use ladder_sim::hamiltonian::{self, DisorderMode};
use ladder_sim::lattice::{self, LadderLayout};
use ladder_sim::propagate;
use ladder_sim::protocols::{self, LayoutChoice, ProtocolId};
use ladder_sim::pulses::ControlMatrix;
use ladder_sim::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Eigensolve(_) | Error::NotHermitian(_) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn parse_mode(s: &str) -> PyResult<DisorderMode> {
    DisorderMode::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown disorder mode '{s}'")))
}

#[pyclass(name = "Layout", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyLayout(pub LadderLayout);

#[pymethods]
impl PyLayout {
    /// Ladder with `n` computational rows.
    #[staticmethod]
    fn ladder(n: usize) -> PyResult<Self> {
        lattice::build_ladder(n).map(Self).map_err(to_py)
    }

    /// `row7`, `reversed_h` or `ladder<N>`.
    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        parse::<LayoutChoice>(name)?.build().map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        LadderLayout::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.0.n_qubits()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges.clone()
    }

    /// Species letter of every qubit.
    #[getter]
    fn species(&self) -> Vec<String> {
        self.0.qubits.iter().map(|q| q.species.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Layout('{}', n_qubits={})", self.0.name, self.0.n_qubits())
    }
}

#[pyclass(name = "Params", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyParams(pub hamiltonian::PhysicalParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (eta_br=20.0, omega_bar=7.0, zeta_bar=0.2))]
    fn new(eta_br: f64, omega_bar: f64, zeta_bar: f64) -> PyResult<Self> {
        hamiltonian::PhysicalParams::new(omega_bar, zeta_bar, eta_br).map(Self).map_err(to_py)
    }

    #[getter]
    fn eta_br(&self) -> f64 {
        self.0.eta_br
    }

    #[getter]
    fn zeta_bar(&self) -> f64 {
        self.0.zeta_bar
    }

    /// Rabi frequencies (A, B, C), rad/ns.
    #[getter]
    fn rabi(&self) -> [f64; 3] {
        self.0.rabi
    }
}

#[pyclass(name = "Disorder", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyDisorder(pub hamiltonian::DisorderRealization);

#[pymethods]
impl PyDisorder {
    #[staticmethod]
    fn zero(layout: &PyLayout) -> Self {
        Self(hamiltonian::DisorderRealization::zero(&layout.0))
    }

    #[staticmethod]
    #[pyo3(signature = (layout, params, epsilon, seed, mode="omega_only"))]
    fn sample(layout: &PyLayout, params: &PyParams, epsilon: f64, seed: u64, mode: &str) -> PyResult<Self> {
        hamiltonian::sample_disorder(&layout.0, &params.0, epsilon, seed, parse_mode(mode)?)
            .map(Self)
            .map_err(to_py)
    }

    /// Adds δω₁ ~ N(0, spread) to every qubit.
    fn perturb(&self, spread: f64, seed: u64, sample: u64) -> PyResult<Self> {
        hamiltonian::perturb_disorder(&self.0, spread, seed, sample).map(Self).map_err(to_py)
    }

    #[getter]
    fn omega_offsets(&self) -> Vec<f64> {
        self.0.omega_offsets.clone()
    }

    #[getter]
    fn zeta_offsets(&self) -> Vec<f64> {
        self.0.zeta_offsets.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        hamiltonian::DisorderRealization::from_json(text).map(Self).map_err(to_py)
    }
}

#[pyclass(name = "Controls", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyControls(pub ControlMatrix);

#[pymethods]
impl PyControls {
    /// `amplitudes[j][k]` for channel j in (Ax, Ay, Bx, By, Cx, Cy), slot k.
    #[new]
    fn new(amplitudes: Vec<Vec<f64>>, slot: f64) -> PyResult<Self> {
        if amplitudes.len() != 6 {
            return Err(PyValueError::new_err("need 6 channel rows"));
        }
        let m = amplitudes[0].len();
        if amplitudes.iter().any(|r| r.len() != m) {
            return Err(PyValueError::new_err("channel rows differ in length"));
        }
        let mut c = ControlMatrix::zeros(m, slot);
        for (k, col) in c.columns.iter_mut().enumerate() {
            for j in 0..6 {
                col[j] = amplitudes[j][k];
            }
        }
        c.validate().map_err(to_py)?;
        Ok(Self(c))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ControlMatrix::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.0.n_slots()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.total_duration()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<Vec<f64>> {
        (0..6).map(|j| self.0.columns.iter().map(|c| c[j]).collect()).collect()
    }
}

#[pyclass(name = "Protocol", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyProtocol(pub protocols::Protocol);

#[pymethods]
impl PyProtocol {
    /// `identity`, `info_flow_b`, `info_flow_a`, `hadamard` or `cz`.
    #[new]
    #[pyo3(signature = (name, params, layout=None))]
    fn new(name: &str, params: &PyParams, layout: Option<&str>) -> PyResult<Self> {
        let id: ProtocolId = parse(name)?;
        let choice = match layout {
            Some(l) => parse(l)?,
            None => id.default_layout(),
        };
        protocols::Protocol::new(id, &params.0, choice).map(Self).map_err(to_py)
    }

    #[getter]
    fn layout(&self) -> PyLayout {
        PyLayout(self.0.layout.clone())
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.schedule.duration()
    }

    /// Naive schedule on a uniform grid; by default the largest exact slot ≤ 2.5 ns.
    #[pyo3(signature = (slot=None))]
    fn naive_controls(&self, slot: Option<f64>) -> PyResult<PyControls> {
        let slot = slot.unwrap_or_else(|| self.0.natural_slot(2.5));
        self.0.naive_controls(slot).map(PyControls).map_err(to_py)
    }

    #[pyo3(signature = (p, phi=0.0))]
    fn initial_state(&self, p: f64, phi: f64) -> PyResult<Vec<Complex64>> {
        self.0.initial_state(p, phi).map_err(to_py)
    }

    #[pyo3(signature = (params, p, phi=0.0))]
    fn target_state(&self, params: &PyParams, p: f64, phi: f64) -> PyResult<Vec<Complex64>> {
        self.0.target_state(&params.0, p, phi).map_err(to_py)
    }
}

#[pyclass(name = "FidelityReport", frozen)]
pub struct PyReport(pub fidelity::FidelityReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean
    }

    #[getter]
    fn stderr(&self) -> f64 {
        self.0.stderr
    }

    #[getter]
    fn state_std(&self) -> f64 {
        self.0.state_std
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.0.n_samples
    }

    /// (p, phi, fidelity, stderr) per grid point.
    #[getter]
    fn entries(&self) -> Vec<(f64, f64, f64, f64)> {
        self.0.entries.iter().map(|e| (e.p, e.phi, e.fidelity, e.stderr)).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(to_py)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    fn __repr__(&self) -> String {
        format!(
            "FidelityReport({}, mean={:.6}, stderr={:.6}, n_samples={})",
            self.0.protocol, self.0.mean, self.0.stderr, self.0.n_samples
        )
    }
}

#[pyclass(name = "GrapeResult", frozen)]
pub struct PyGrapeResult(pub grape::GrapeResult);

#[pymethods]
impl PyGrapeResult {
    #[getter]
    fn controls(&self) -> PyControls {
        PyControls(self.0.controls.clone())
    }

    #[getter]
    fn cost_trajectory(&self) -> Vec<f64> {
        self.0.cost_trajectory.clone()
    }

    #[getter]
    fn final_cost(&self) -> f64 {
        self.0.final_cost
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn wall_clock_secs(&self) -> f64 {
        self.0.wall_clock_secs
    }

    #[getter]
    fn termination(&self) -> String {
        serde_json::to_string(&self.0.termination).expect("termination serializes")
    }
}

#[pyfunction]
fn ladder_qubit_count(n: usize) -> usize {
    lattice::ladder_qubit_count(n)
}

/// Returns (final state, norm drift).
#[pyfunction]
fn evolve_state(psi0: Vec<Complex64>, layout: &PyLayout, params: &PyParams, disorder: &PyDisorder, controls: &PyControls) -> PyResult<(Vec<Complex64>, f64)> {
    let out = propagate::evolve_state(&psi0, &layout.0, &params.0, &disorder.0, &controls.0).map_err(to_py)?;
    Ok((out.state, out.norm_drift))
}

#[pyfunction]
fn state_fidelity(target: Vec<Complex64>, actual: Vec<Complex64>) -> PyResult<f64> {
    fidelity::state_fidelity(&target, &actual).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (protocol, params, disorder, controls, p_grid, phi=0.0))]
fn averaged_fidelity(protocol: &PyProtocol, params: &PyParams, disorder: &PyDisorder, controls: &PyControls, p_grid: Vec<f64>, phi: f64) -> PyResult<PyReport> {
    fidelity::averaged_fidelity(&protocol.0, &params.0, &disorder.0, &controls.0, &p_grid, phi)
        .map(PyReport)
        .map_err(to_py)
}

/// `metric` is `per_realization` or `averaged_state`.
#[pyfunction]
#[pyo3(signature = (protocol, params, controls, p_grid, realizations, phi=0.0, metric="per_realization"))]
fn ensemble_fidelity(
    protocol: &PyProtocol,
    params: &PyParams,
    controls: &PyControls,
    p_grid: Vec<f64>,
    realizations: Vec<PyDisorder>,
    phi: f64,
    metric: &str,
) -> PyResult<PyReport> {
    let metric = match metric {
        "per_realization" => FidelityMetric::PerRealization,
        "averaged_state" => FidelityMetric::AveragedState,
        m => return Err(PyValueError::new_err(format!("unknown metric '{m}'"))),
    };
    let reals: Vec<_> = realizations.into_iter().map(|d| d.0).collect();
    fidelity::ensemble_fidelity(&protocol.0, &params.0, &controls.0, &p_grid, phi, &reals, metric)
        .map(PyReport)
        .map_err(to_py)
}

/// State-set GRAPE from `initial` on one realization.
#[pyfunction]
#[pyo3(signature = (protocol, params, disorder, initial, max_iters=2000, tolerance=2e-3, training_p=vec![0.0, 0.33, 0.66], seed=0))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    protocol: &PyProtocol,
    params: &PyParams,
    disorder: &PyDisorder,
    initial: &PyControls,
    max_iters: usize,
    tolerance: f64,
    training_p: Vec<f64>,
    seed: u64,
) -> PyResult<PyGrapeResult> {
    let p = &protocol.0;
    let initial_states = training_p.iter().map(|&x| p.initial_state(x, 0.0)).collect::<Result<_, _>>().map_err(to_py)?;
    let targets = training_p
        .iter()
        .map(|&x| p.target_state(&params.0, x, 0.0))
        .collect::<Result<_, _>>()
        .map_err(to_py)?;
    let config = GrapeConfig {
        target: GrapeTarget::States {
            initial: initial_states,
            target: targets,
        },
        settings: GrapeSettings {
            max_iters,
            tolerance,
            seed,
            ..GrapeSettings::default()
        },
    };
    py.detach(|| grape::optimize(&p.layout, &params.0, &disorder.0, &initial.0, &config))
        .map(PyGrapeResult)
        .map_err(to_py)
}

/// Runs an experiment file's study and returns the manifest as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_toml: &str, out_dir: PathBuf) -> PyResult<String> {
    let spec = ExperimentSpec::from_toml(config_toml).map_err(to_py)?;
    let manifest = py.detach(|| experiments::run(&spec, &out_dir)).map_err(to_py)?;
    Ok(serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
}

pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayout>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyDisorder>()?;
    m.add_class::<PyControls>()?;
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyGrapeResult>()?;
    m.add_function(wrap_pyfunction!(ladder_qubit_count, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_state, m)?)?;
    m.add_function(wrap_pyfunction!(state_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(averaged_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

#[pymodule]
fn ladder_sim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
