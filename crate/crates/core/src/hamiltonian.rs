//! Physical parameters, static disorder and the lab / rotating-frame
//! Hamiltonians.
//!
//! Units: time in ns, angular frequencies in rad/ns, ħ = 1. Basis index bit
//! `i` set means qubit `i` is excited.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LadderLayout, Species};

pub type OperatorMatrix = DMatrix<Complex64>;

/// Largest register for which dense operators are built.
pub const MAX_DENSE_QUBITS: usize = 10;
/// Largest register for which state vectors are evolved.
pub const MAX_STATE_QUBITS: usize = 15;

/// Number of drive channels: X and Y quadratures for each species.
pub const N_CHANNELS: usize = 6;

/// Channel row for a species quadrature; rows are (A,x), (A,y), (B,x), (B,y), (C,x), (C,y).
pub fn channel_index(species: Species, quadrature_y: bool) -> usize {
    2 * species.index() + quadrature_y as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Nominal qubit frequency per species (A, B, C).
    pub omega_bar: [f64; 3],
    /// Nominal ZZ coupling.
    pub zeta_bar: f64,
    /// Rabi frequency Ω_χ per species.
    pub rabi: [f64; 3],
    pub eta_br: f64,
}

impl PhysicalParams {
    /// Equal nominal frequencies for all species, Ω_χ = ζ̄ / η_BR.
    pub fn new(omega_bar: f64, zeta_bar: f64, eta_br: f64) -> Result<Self> {
        let rabi = zeta_bar / eta_br;
        let p = Self {
            omega_bar: [omega_bar; 3],
            zeta_bar,
            rabi: [rabi; 3],
            eta_br,
        };
        p.validate()?;
        Ok(p)
    }

    /// 7 GHz qubits and ζ̄ = 0.2 rad/ns, the scale at which η_BR = 20 gives
    /// the 2.8 µs shift and η_BR = 5 the 0.7 µs shift.
    pub fn standard(eta_br: f64) -> Result<Self> {
        Self::new(7.0, 0.2, eta_br)
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = self.omega_bar.iter().chain(self.rabi.iter()).all(|&x| x > 0.0 && x.is_finite()) && self.zeta_bar > 0.0 && self.eta_br > 0.0;
        if !all_positive {
            return Err(Error::InvalidArgument("frequencies must be positive".into()));
        }
        for &r in &self.rabi {
            let eta = (self.zeta_bar / r).abs();
            if ((eta - self.eta_br) / self.eta_br).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("eta_br {} inconsistent with zeta/rabi {eta}", self.eta_br)));
            }
        }
        Ok(())
    }

    pub fn omega(&self, s: Species) -> f64 {
        self.omega_bar[s.index()]
    }

    pub fn rabi(&self, s: Species) -> f64 {
        self.rabi[s.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderMode {
    OmegaOnly,
    ZetaOnly,
    Both,
}

impl DisorderMode {
    pub const ALL: [DisorderMode; 3] = [DisorderMode::OmegaOnly, DisorderMode::ZetaOnly, DisorderMode::Both];

    pub fn name(self) -> &'static str {
        match self {
            DisorderMode::OmegaOnly => "omega_only",
            DisorderMode::ZetaOnly => "zeta_only",
            DisorderMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub omega_offsets: Vec<f64>,
    pub zeta_offsets: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub stream: u64,
    pub mode: DisorderMode,
}

/// Stream offset separating perturbation draws from base disorder draws.
pub const PERTURB_STREAM_BASE: u64 = 1 << 63;

/// Random stream `stream` of top-level seed `seed`.
///
/// Splitting rule: ChaCha20 keyed by `seed` (via `seed_from_u64`) with the
/// 64-bit stream id set to `stream`. Disorder realization `r` of a run uses
/// stream `r`; perturbation sample `k` uses `PERTURB_STREAM_BASE + k`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl DisorderRealization {
    pub fn zero(layout: &LadderLayout) -> Self {
        Self {
            omega_offsets: vec![0.0; layout.n_qubits()],
            zeta_offsets: vec![0.0; layout.edges.len()],
            epsilon: 0.0,
            seed: 0,
            stream: 0,
            mode: DisorderMode::Both,
        }
    }

    pub fn check(&self, layout: &LadderLayout) -> Result<()> {
        if self.omega_offsets.len() != layout.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_qubits(),
                got: self.omega_offsets.len(),
            });
        }
        if self.zeta_offsets.len() != layout.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.edges.len(),
                got: self.zeta_offsets.len(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Stream 0 of `seed`; see [`sample_disorder_stream`].
pub fn sample_disorder(layout: &LadderLayout, params: &PhysicalParams, epsilon: f64, seed: u64, mode: DisorderMode) -> Result<DisorderRealization> {
    sample_disorder_stream(layout, params, epsilon, seed, 0, mode)
}

/// Draws δω_i ~ N(0, ε ω̄_χ(i)) for every qubit, then δζ_ij ~ N(0, ε ζ̄) for
/// every edge, and zeroes the channel excluded by `mode`. Both sequences are
/// always drawn, so the ω offsets of a given (seed, stream) are the same for
/// `OmegaOnly` and `Both`.
pub fn sample_disorder_stream(
    layout: &LadderLayout,
    params: &PhysicalParams,
    epsilon: f64,
    seed: u64,
    stream: u64,
    mode: DisorderMode,
) -> Result<DisorderRealization> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut rng = stream_rng(seed, stream);
    let mut omega_offsets: Vec<f64> = layout
        .qubits
        .iter()
        .map(|q| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * epsilon * params.omega(q.species)
        })
        .collect();
    let mut zeta_offsets: Vec<f64> = (0..layout.edges.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * epsilon * params.zeta_bar
        })
        .collect();
    match mode {
        DisorderMode::OmegaOnly => zeta_offsets.iter_mut().for_each(|x| *x = 0.0),
        DisorderMode::ZetaOnly => omega_offsets.iter_mut().for_each(|x| *x = 0.0),
        DisorderMode::Both => {}
    }
    Ok(DisorderRealization {
        omega_offsets,
        zeta_offsets,
        epsilon,
        seed,
        stream,
        mode,
    })
}

/// Adds δω₁ ~ N(0, spread) to every qubit frequency of `base`, drawn from
/// stream `PERTURB_STREAM_BASE + sample` of `seed`.
pub fn perturb_disorder(base: &DisorderRealization, spread: f64, seed: u64, sample: u64) -> Result<DisorderRealization> {
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    let mut out = base.clone();
    if spread == 0.0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, PERTURB_STREAM_BASE.wrapping_add(sample));
    for x in &mut out.omega_offsets {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x += z * spread;
    }
    Ok(out)
}

/// Lab-frame ω_i including the connectivity correction and disorder.
pub fn qubit_frequencies(layout: &LadderLayout, params: &PhysicalParams, disorder: &DisorderRealization) -> Vec<f64> {
    layout
        .qubits
        .iter()
        .map(|q| params.omega(q.species) + q.freq_class as f64 * params.zeta_bar + disorder.omega_offsets[q.index])
        .collect()
}

/// Rotating-frame frequency of each qubit: its nominal single-excitation
/// transition with all neighbours in |g⟩, ω̄_χ + (freq_class − degree) ζ̄.
/// For B/C qubits this is ω̄_χ − 2ζ̄.
pub fn frame_frequencies(layout: &LadderLayout, params: &PhysicalParams) -> Vec<f64> {
    layout
        .qubits
        .iter()
        .map(|q| params.omega(q.species) + (q.freq_class - q.degree as i32) as f64 * params.zeta_bar)
        .collect()
}

/// Diagonal operator stored by its entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    pub entries: Vec<f64>,
}

impl DiagonalOperator {
    pub fn to_dense(&self) -> OperatorMatrix {
        let d = self.entries.len();
        DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                Complex64::new(self.entries[r], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

fn guard(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::ResourceGuard { n_qubits: n, limit })
    } else {
        Ok(())
    }
}

/// H₀ = Σ (ω_i/2) σz_i + Σ (ζ_ij/2) σz_i σz_j, which is diagonal.
pub fn build_h0_lab(layout: &LadderLayout, params: &PhysicalParams, disorder: &DisorderRealization) -> Result<DiagonalOperator> {
    disorder.check(layout)?;
    guard(layout.n_qubits(), MAX_STATE_QUBITS)?;
    let omega = qubit_frequencies(layout, params, disorder);
    let zeta: Vec<f64> = disorder.zeta_offsets.iter().map(|dz| params.zeta_bar + dz).collect();
    let sz = |x: usize, i: usize| if x >> i & 1 == 1 { 1.0 } else { -1.0 };
    let entries = (0..layout.dim())
        .map(|x| {
            let single: f64 = omega.iter().enumerate().map(|(i, w)| 0.5 * w * sz(x, i)).sum();
            let pair: f64 = layout.edges.iter().zip(&zeta).map(|(&(a, b), z)| 0.5 * z * sz(x, a) * sz(x, b)).sum();
            single + pair
        })
        .collect();
    Ok(DiagonalOperator { entries })
}

/// One single-qubit flip term of a slot Hamiltonian: ⟨g|H|e⟩ on qubit `mask`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub mask: usize,
    pub h: Complex64,
}

/// Rotating-frame RWA model with static disorder; drives enter per slot.
///
/// H = Σ_i Δ_i n_i + Σ_⟨ij⟩ 2ζ_ij n_i n_j + Σ_χ Σ_{i∈χ} m_i Ω_χ (u_x σx_i + u_y σy_i)
/// with Δ_i = δω_i − Σ_j δζ_ij the residual detuning against the nominal
/// frame. A naive pulse of Rabi frequency Ω_χ therefore has |u| = 1/2.
#[derive(Debug, Clone)]
pub struct RwaModel {
    n_qubits: usize,
    diag: Vec<f64>,
    /// (qubit, species, m_i Ω_χ) for every qubit.
    couplings: Vec<(usize, Species, f64)>,
}

impl RwaModel {
    pub fn new(layout: &LadderLayout, params: &PhysicalParams, disorder: &DisorderRealization) -> Result<Self> {
        disorder.check(layout)?;
        params.validate()?;
        let n = layout.n_qubits();
        guard(n, MAX_STATE_QUBITS)?;
        let mut detuning = disorder.omega_offsets.clone();
        for (&(a, b), dz) in layout.edges.iter().zip(&disorder.zeta_offsets) {
            detuning[a] -= dz;
            detuning[b] -= dz;
        }
        let zz: Vec<(usize, f64)> = layout
            .edges
            .iter()
            .zip(&disorder.zeta_offsets)
            .map(|(&(a, b), dz)| ((1 << a) | (1 << b), 2.0 * (params.zeta_bar + dz)))
            .collect();
        let diag = (0..1usize << n)
            .map(|x| {
                let single: f64 = detuning.iter().enumerate().filter(|(i, _)| x >> i & 1 == 1).map(|(_, d)| d).sum();
                let pair: f64 = zz.iter().filter(|(m, _)| x & m == *m).map(|(_, z)| z).sum();
                single + pair
            })
            .collect();
        let couplings = layout
            .qubits
            .iter()
            .map(|q| (q.index, q.species, q.drive_multiplier() * params.rabi(q.species)))
            .collect();
        Ok(Self { n_qubits: n, diag, couplings })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Static diagonal energies.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Flip terms of the slot Hamiltonian for channel amplitudes `u`.
    pub fn flips(&self, u: &[f64; N_CHANNELS]) -> Vec<Flip> {
        self.couplings
            .iter()
            .filter_map(|&(i, s, c)| {
                let ux = u[channel_index(s, false)];
                let uy = u[channel_index(s, true)];
                (ux != 0.0 || uy != 0.0).then(|| Flip {
                    mask: 1 << i,
                    h: Complex64::new(c * ux, c * uy),
                })
            })
            .collect()
    }

    /// Flip terms of ∂H/∂u_j for channel row `j`.
    pub fn channel_flips(&self, j: usize) -> Vec<Flip> {
        let mut u = [0.0; N_CHANNELS];
        u[j] = 1.0;
        self.flips(&u)
    }

    /// out = H v for the slot Hamiltonian with the given flips.
    pub fn apply(&self, flips: &[Flip], v: &[Complex64], out: &mut [Complex64]) {
        for (x, (o, &vx)) in out.iter_mut().zip(v).enumerate() {
            let mut acc = vx * self.diag[x];
            for f in flips {
                let y = x ^ f.mask;
                let h = if x & f.mask == 0 { f.h } else { f.h.conj() };
                acc += h * v[y];
            }
            *o = acc;
        }
    }

    /// Interval containing the spectrum of the slot Hamiltonian.
    pub fn spectral_bounds(&self, flips: &[Flip]) -> (f64, f64) {
        let (lo, hi) = self.diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let radius: f64 = flips.iter().map(|f| f.h.norm()).sum();
        (lo - radius, hi + radius)
    }

    pub fn dense(&self, flips: &[Flip]) -> Result<OperatorMatrix> {
        guard(self.n_qubits, MAX_DENSE_QUBITS)?;
        let d = self.dim();
        let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for x in 0..d {
            m[(x, x)] = Complex64::new(self.diag[x], 0.0);
            for f in flips {
                let h = if x & f.mask == 0 { f.h } else { f.h.conj() };
                m[(x, x ^ f.mask)] += h;
            }
        }
        Ok(m)
    }
}

pub fn check_amplitudes(u: &[f64]) -> Result<()> {
    for (channel, &value) in u.iter().enumerate() {
        if !(value.abs() <= 1.0) {
            return Err(Error::AmplitudeOutOfRange { channel, value });
        }
    }
    Ok(())
}

/// Dense rotating-frame Hamiltonian for one set of channel amplitudes.
pub fn build_rwa_hamiltonian(
    layout: &LadderLayout,
    params: &PhysicalParams,
    disorder: &DisorderRealization,
    amplitudes: &[f64; N_CHANNELS],
) -> Result<OperatorMatrix> {
    check_amplitudes(amplitudes)?;
    guard(layout.n_qubits(), MAX_DENSE_QUBITS)?;
    let model = RwaModel::new(layout, params, disorder)?;
    model.dense(&model.flips(amplitudes))
}

/// max |H − H†| over entries.
pub fn hermiticity_defect(h: &OperatorMatrix) -> f64 {
    let d = h.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in 0..d {
            worst = worst.max((h[(r, c)] - h[(c, r)].conj()).norm());
        }
    }
    worst
}
