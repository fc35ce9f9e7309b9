//! ICC states, the ideal blockade-limit gate model, and fidelity metrics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{DisorderRealization, OperatorMatrix, PhysicalParams, RwaModel, MAX_DENSE_QUBITS, MAX_STATE_QUBITS};
use crate::lattice::{LadderLayout, Site, Species};
use crate::propagate::{check_normalized, evolve_state_model, StateVector};
use crate::protocols::Protocol;
use crate::pulses::{ControlMatrix, PulseSchedule};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Interface state: Néel domain left of `position`, ferromagnetic domain to
/// the right, and √(1−p)|g⟩ + √p e^{iφ}|e⟩ on the interface qubit of row 0,
/// or of every row with `all_rows`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccState {
    pub p: f64,
    pub phi: f64,
    pub position: usize,
    #[serde(default)]
    pub all_rows: bool,
}

impl IccState {
    pub fn new(p: f64, phi: f64, position: usize) -> Self {
        Self {
            p,
            phi,
            position,
            all_rows: false,
        }
    }

    pub fn column_type(&self) -> Species {
        Species::of_column(self.position)
    }
}

/// Bits of the classical background and the interface qubit of each superposed row.
fn icc_structure(layout: &LadderLayout, spec: &IccState) -> Result<(usize, Vec<usize>)> {
    if !(0.0..=1.0).contains(&spec.p) {
        return Err(Error::InvalidArgument(format!("p = {} outside [0, 1]", spec.p)));
    }
    if spec.position >= layout.columns {
        return Err(Error::InvalidArgument(format!("ICC column {} outside layout", spec.position)));
    }
    let mut background = 0usize;
    let mut icc = Vec::new();
    for q in &layout.qubits {
        if let Site::Grid { row, column } = q.site {
            if column < spec.position && (spec.position - column).is_multiple_of(2) {
                background |= 1 << q.index;
            }
            if column == spec.position && (spec.all_rows || row == 0) {
                icc.push(q.index);
            }
        }
    }
    if icc.is_empty() {
        return Err(Error::InvalidArgument(format!("no qubit at ICC column {}", spec.position)));
    }
    Ok((background, icc))
}

pub fn make_icc_state(layout: &LadderLayout, spec: &IccState) -> Result<StateVector> {
    if layout.n_qubits() > MAX_STATE_QUBITS {
        return Err(Error::ResourceGuard {
            n_qubits: layout.n_qubits(),
            limit: MAX_STATE_QUBITS,
        });
    }
    let (background, icc) = icc_structure(layout, spec)?;
    let a0 = Complex64::new((1.0 - spec.p).sqrt(), 0.0);
    let a1 = Complex64::from_polar(spec.p.sqrt(), spec.phi);
    let mut psi = vec![ZERO; layout.dim()];
    for subset in 0..1usize << icc.len() {
        let mut index = background;
        let mut amp = Complex64::new(1.0, 0.0);
        for (k, &q) in icc.iter().enumerate() {
            if subset >> k & 1 == 1 {
                index |= 1 << q;
                amp *= a1;
            } else {
                amp *= a0;
            }
        }
        psi[index] += amp;
    }
    Ok(psi)
}

/// R(θ, n) = cos(θ/2) 1 − i sin(θ/2) n·σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub theta: f64,
    pub axis: [f64; 3],
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            axis: [0.0, 0.0, 1.0],
        }
    }

    /// Rotation about the equatorial axis at angle `phi`.
    pub fn equatorial(theta: f64, phi: f64) -> Self {
        Self {
            theta,
            axis: [phi.cos(), phi.sin(), 0.0],
        }
    }

    /// 2×2 matrix in (g, e) order; σz|e⟩ = |e⟩ and ⟨g|σy|e⟩ = i.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let (s, c) = (0.5 * self.theta).sin_cos();
        let [nx, ny, nz] = self.axis;
        [
            [Complex64::new(c, s * nz), Complex64::new(s * ny, -s * nx)],
            [Complex64::new(-s * ny, -s * nx), Complex64::new(c, -s * nz)],
        ]
    }
}

/// Controlled rotations for one species: `regular` on ordinary qubits,
/// `crossed` on crossed ones, each active only when all neighbours are in |g⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealGateSpec {
    pub species: Species,
    pub regular: Rotation,
    pub crossed: Rotation,
}

impl IdealGateSpec {
    /// Global pulse of angle θ: crossed qubits see twice the Rabi frequency.
    pub fn primitive(species: Species, theta: f64, phi: f64) -> Self {
        Self {
            species,
            regular: Rotation::equatorial(theta, phi),
            crossed: Rotation::equatorial(2.0 * theta, phi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.regular, self.crossed] {
            let n: f64 = r.axis.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("rotation axis must be a unit vector".into()));
            }
        }
        Ok(())
    }
}

/// Applies Π_{i∈χ} [1 Q_⟨i⟩ + R_i P_⟨i⟩] in place. Qubits of one species are
/// never adjacent, so the factors commute.
pub fn apply_ideal(layout: &LadderLayout, spec: &IdealGateSpec, psi: &mut [Complex64]) {
    let masks = layout.neighbor_masks();
    for q in layout.qubits_of(spec.species) {
        let r = if q.crossed { spec.crossed } else { spec.regular }.matrix();
        let bit = 1usize << q.index;
        let nb = masks[q.index];
        for x in 0..psi.len() {
            if x & bit != 0 || x & nb != 0 {
                continue;
            }
            let y = x | bit;
            let (g, e) = (psi[x], psi[y]);
            psi[x] = r[0][0] * g + r[0][1] * e;
            psi[y] = r[1][0] * g + r[1][1] * e;
        }
    }
}

pub fn ideal_blockade_unitary(layout: &LadderLayout, spec: &IdealGateSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    if layout.n_qubits() > MAX_DENSE_QUBITS {
        return Err(Error::ResourceGuard {
            n_qubits: layout.n_qubits(),
            limit: MAX_DENSE_QUBITS,
        });
    }
    let d = layout.dim();
    let mut u = DMatrix::from_element(d, d, ZERO);
    let mut col = vec![ZERO; d];
    for c in 0..d {
        col.iter_mut().for_each(|z| *z = ZERO);
        col[c] = Complex64::new(1.0, 0.0);
        apply_ideal(layout, spec, &mut col);
        u.column_mut(c).iter_mut().zip(&col).for_each(|(m, &z)| *m = z);
    }
    Ok(u)
}

/// Runs a schedule through the ideal model: each segment is a primitive
/// pulse of angle 2 a Ω_χ τ.
pub fn ideal_apply_schedule(layout: &LadderLayout, params: &PhysicalParams, schedule: &PulseSchedule, psi: &mut [Complex64]) {
    for seg in schedule.segments() {
        let spec = IdealGateSpec::primitive(seg.species, seg.theta(params), seg.phase);
        apply_ideal(layout, &spec, psi);
    }
}

/// |⟨target|actual⟩|.
pub fn state_fidelity(target: &[Complex64], actual: &[Complex64]) -> Result<f64> {
    if target.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: actual.len(),
        });
    }
    check_normalized(target)?;
    check_normalized(actual)?;
    Ok(overlap(target, actual).norm().min(1.0))
}

pub fn overlap(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// 1 − |Tr(X_target† X)| / d.
pub fn trace_cost(x: &OperatorMatrix, target: &OperatorMatrix) -> Result<f64> {
    if x.shape() != target.shape() || x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: target.nrows(),
            got: x.nrows(),
        });
    }
    let tr: Complex64 = target.iter().zip(x.iter()).map(|(t, v)| t.conj() * v).sum();
    Ok((1.0 - tr.norm() / x.nrows() as f64).max(0.0))
}

/// How per-realization overlaps c_s = ⟨Ψ_target|Ψ_s⟩ are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMetric {
    /// mean_s |c_s|: each realization scored on its own.
    #[default]
    PerRealization,
    /// |mean_s c_s|: overlap of the disorder-averaged final state with the
    /// target. Random phases between realizations count as infidelity.
    AveragedState,
}

impl FidelityMetric {
    pub fn name(self) -> &'static str {
        match self {
            FidelityMetric::PerRealization => "per_realization",
            FidelityMetric::AveragedState => "averaged_state",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub p: f64,
    pub phi: f64,
    pub fidelity: f64,
    /// Standard error over disorder samples; 0 for a single sample.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub entries: Vec<FidelityEntry>,
    /// Mean of the entries, F̄.
    pub mean: f64,
    /// Standard error of F̄ over disorder samples.
    pub stderr: f64,
    /// Standard deviation of the entries over the initial-state grid.
    pub state_std: f64,
    pub n_samples: usize,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub protocol: String,
    pub metric: FidelityMetric,
    /// Per-sample mean_p |c_s(p)|, in sample order.
    pub sample_means: Vec<f64>,
    /// Largest norm drift seen during evolution.
    pub max_norm_drift: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Jackknife standard error of `stat` over the rows.
fn jackknife<T, F: Fn(&[&T]) -> f64>(rows: &[T], stat: F) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let loo: Vec<f64> = (0..n)
        .map(|skip| {
            let kept: Vec<&T> = rows.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, r)| r).collect();
            stat(&kept)
        })
        .collect();
    let m = mean(&loo);
    ((n - 1) as f64 / n as f64 * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
}

/// Complex overlaps `rows[s][i]` of sample `s` at grid point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSamples {
    pub p_grid: Vec<f64>,
    pub phi: f64,
    pub rows: Vec<Vec<Complex64>>,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub max_norm_drift: f64,
}

impl OverlapSamples {
    pub fn report(&self, protocol: &str, metric: FidelityMetric) -> FidelityReport {
        let n = self.rows.len();
        let sample_means: Vec<f64> = self.rows.iter().map(|r| mean(&r.iter().map(|c| c.norm()).collect::<Vec<_>>())).collect();
        let coherent = |rows: &[&Vec<Complex64>], i: usize| (rows.iter().map(|r| r[i]).sum::<Complex64>() / rows.len() as f64).norm();
        let entries: Vec<FidelityEntry> = self
            .p_grid
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let (fidelity, stderr) = match metric {
                    FidelityMetric::PerRealization => {
                        let xs: Vec<f64> = self.rows.iter().map(|r| r[i].norm()).collect();
                        (mean(&xs), sample_std(&xs) / (n as f64).sqrt())
                    }
                    FidelityMetric::AveragedState => {
                        let all: Vec<&Vec<Complex64>> = self.rows.iter().collect();
                        (coherent(&all, i), jackknife(&self.rows, |rs| coherent(rs, i)))
                    }
                };
                FidelityEntry {
                    p,
                    phi: self.phi,
                    fidelity,
                    stderr,
                }
            })
            .collect();
        let fids: Vec<f64> = entries.iter().map(|e| e.fidelity).collect();
        let stderr = match metric {
            FidelityMetric::PerRealization => sample_std(&sample_means) / (n as f64).sqrt(),
            FidelityMetric::AveragedState => jackknife(&self.rows, |rs| mean(&(0..self.p_grid.len()).map(|i| coherent(rs, i)).collect::<Vec<_>>())),
        };
        FidelityReport {
            mean: mean(&fids),
            stderr,
            state_std: sample_std(&fids),
            entries,
            n_samples: n,
            epsilon: self.epsilon,
            seeds: self.seeds.clone(),
            protocol: protocol.to_string(),
            metric,
            sample_means,
            max_norm_drift: self.max_norm_drift,
        }
    }
}

impl FidelityReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epsilon", "p", "phi", "fidelity", "stderr", "n_samples", "protocol", "seed"])?;
        let seed = self.seeds.first().map(|s| s.to_string()).unwrap_or_default();
        for e in &self.entries {
            out.write_record([
                format!("{}", self.epsilon),
                format!("{}", e.p),
                format!("{}", e.phi),
                format!("{:.12}", e.fidelity),
                format!("{:.12}", e.stderr),
                self.n_samples.to_string(),
                self.protocol.clone(),
                seed.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evolves `initial` under one disorder realization and returns the complex
/// overlaps with `targets`, plus the worst norm drift. When the states share
/// a small basis support, the support states are evolved once and recombined.
pub fn grid_overlaps(model: &RwaModel, controls: &ControlMatrix, initial: &[StateVector], targets: &[StateVector]) -> Result<(Vec<Complex64>, f64)> {
    let mut support: Vec<usize> = Vec::new();
    for psi in initial {
        for (x, z) in psi.iter().enumerate() {
            if z.norm() > 0.0 && !support.contains(&x) {
                support.push(x);
            }
        }
    }
    let d = model.dim();
    let mut drift: f64 = 0.0;
    let finals: Vec<StateVector> = if support.len() < initial.len() {
        let mut evolved = Vec::with_capacity(support.len());
        for &x in &support {
            let mut e = vec![ZERO; d];
            e[x] = Complex64::new(1.0, 0.0);
            let out = evolve_state_model(model, &e, controls)?;
            drift = drift.max(out.norm_drift);
            evolved.push(out.state);
        }
        initial
            .iter()
            .map(|psi| {
                let mut f = vec![ZERO; d];
                for (&x, ev) in support.iter().zip(&evolved) {
                    if psi[x].norm() > 0.0 {
                        f.iter_mut().zip(ev).for_each(|(a, &b)| *a += psi[x] * b);
                    }
                }
                f
            })
            .collect()
    } else {
        let mut out = Vec::with_capacity(initial.len());
        for psi in initial {
            let e = evolve_state_model(model, psi, controls)?;
            drift = drift.max(e.norm_drift);
            out.push(e.state);
        }
        out
    };
    let overlaps = targets
        .iter()
        .zip(&finals)
        .map(|(t, f)| {
            let c = overlap(t, f);
            if c.norm() > 1.0 {
                c / c.norm()
            } else {
                c
            }
        })
        .collect();
    Ok((overlaps, drift))
}

/// F̄ over the p-grid for one disorder realization.
pub fn averaged_fidelity(
    protocol: &Protocol,
    params: &PhysicalParams,
    disorder: &DisorderRealization,
    controls: &ControlMatrix,
    p_grid: &[f64],
    phi: f64,
) -> Result<FidelityReport> {
    ensemble_fidelity(
        protocol,
        params,
        controls,
        p_grid,
        phi,
        std::slice::from_ref(disorder),
        FidelityMetric::PerRealization,
    )
}

/// Complex overlaps for every realization. Samples are evaluated in
/// parallel and collected in input order.
pub fn ensemble_overlaps(
    protocol: &Protocol,
    params: &PhysicalParams,
    controls: &ControlMatrix,
    p_grid: &[f64],
    phi: f64,
    realizations: &[DisorderRealization],
) -> Result<OverlapSamples> {
    if p_grid.is_empty() {
        return Err(Error::InvalidArgument("empty p-grid".into()));
    }
    if realizations.is_empty() {
        return Err(Error::InvalidArgument("no disorder realizations".into()));
    }
    let initial: Vec<StateVector> = p_grid.iter().map(|&p| protocol.initial_state(p, phi)).collect::<Result<_>>()?;
    let targets: Vec<StateVector> = p_grid.iter().map(|&p| protocol.target_state(params, p, phi)).collect::<Result<_>>()?;
    let results: Vec<Result<(Vec<Complex64>, f64)>> = realizations
        .par_iter()
        .map(|d| {
            let model = RwaModel::new(&protocol.layout, params, d)?;
            grid_overlaps(&model, controls, &initial, &targets)
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut drift: f64 = 0.0;
    for r in results {
        let (row, dr) = r?;
        rows.push(row);
        drift = drift.max(dr);
    }
    Ok(OverlapSamples {
        p_grid: p_grid.to_vec(),
        phi,
        rows,
        epsilon: realizations[0].epsilon,
        seeds: realizations.iter().map(|d| d.seed).collect(),
        max_norm_drift: drift,
    })
}

/// Fidelity report over the given disorder realizations.
pub fn ensemble_fidelity(
    protocol: &Protocol,
    params: &PhysicalParams,
    controls: &ControlMatrix,
    p_grid: &[f64],
    phi: f64,
    realizations: &[DisorderRealization],
    metric: FidelityMetric,
) -> Result<FidelityReport> {
    Ok(ensemble_overlaps(protocol, params, controls, p_grid, phi, realizations)?.report(protocol.id.name(), metric))
}

/// `n` uniform points on [0, 1].
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}
