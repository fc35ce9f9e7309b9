//! Piecewise-constant time evolution under the rotating-frame Hamiltonian.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::chebyshev::expm_action;
use crate::error::{Error, Result};
use crate::hamiltonian::{hermiticity_defect, DisorderRealization, OperatorMatrix, PhysicalParams, RwaModel, N_CHANNELS};
use crate::lattice::LadderLayout;
use crate::pulses::ControlMatrix;

pub type StateVector = Vec<Complex64>;

/// Eigendecomposition H = V diag(E) V† of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: OperatorMatrix,
}

impl HermitianEigen {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = hermiticity_defect(h);
        if defect > 1e-12 * scale {
            return Err(Error::NotHermitian(defect));
        }
        let eig = SymmetricEigen::new(h.clone());
        if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Eigensolve(0));
        }
        Ok(Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    /// e^{−iH dt}.
    pub fn exp(&self, dt: f64) -> OperatorMatrix {
        let mut scaled = self.vectors.clone();
        for (c, &e) in self.values.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -e * dt);
            scaled.column_mut(c).iter_mut().for_each(|z| *z *= ph);
        }
        scaled * self.vectors.adjoint()
    }
}

/// X = exp(−i H dt).
pub fn slot_propagator(h: &OperatorMatrix, dt: f64) -> Result<OperatorMatrix> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    Ok(HermitianEigen::new(h)?.exp(dt))
}

fn column_key(col: &[f64; N_CHANNELS]) -> [u64; N_CHANNELS] {
    std::array::from_fn(|j| col[j].to_bits())
}

/// Per-slot propagators X_k, each exponentiated once per unique column.
#[derive(Debug, Clone)]
pub struct PropagatorChain {
    pub factors: Vec<OperatorMatrix>,
}

impl PropagatorChain {
    pub fn new(model: &RwaModel, controls: &ControlMatrix) -> Result<Self> {
        controls.validate()?;
        let mut cache: HashMap<[u64; N_CHANNELS], HermitianEigen> = HashMap::new();
        let mut factors = Vec::with_capacity(controls.n_slots());
        for (k, (col, &dt)) in controls.columns.iter().zip(&controls.slot_durations).enumerate() {
            let key = column_key(col);
            if let Entry::Vacant(slot) = cache.entry(key) {
                let h = model.dense(&model.flips(col))?;
                slot.insert(HermitianEigen::new(&h).map_err(|_| Error::Eigensolve(k))?);
            }
            factors.push(cache[&key].exp(dt));
        }
        Ok(Self { factors })
    }

    /// X_M ⋯ X_2 X_1.
    pub fn product(&self, dim: usize) -> OperatorMatrix {
        self.factors.iter().fold(DMatrix::identity(dim, dim), |acc, x| x * acc)
    }
}

/// Full propagator over all slots. Runs of identical columns are
/// exponentiated in one step.
pub fn evolve_unitary(layout: &LadderLayout, params: &PhysicalParams, disorder: &DisorderRealization, controls: &ControlMatrix) -> Result<OperatorMatrix> {
    let model = RwaModel::new(layout, params, disorder)?;
    evolve_unitary_model(&model, controls)
}

pub fn evolve_unitary_model(model: &RwaModel, controls: &ControlMatrix) -> Result<OperatorMatrix> {
    controls.validate()?;
    let d = model.dim();
    let mut cache: HashMap<[u64; N_CHANNELS], HermitianEigen> = HashMap::new();
    let mut x = DMatrix::identity(d, d);
    for (k, (col, dt)) in controls.runs().into_iter().enumerate() {
        let key = column_key(&col);
        if let Entry::Vacant(slot) = cache.entry(key) {
            let h = model.dense(&model.flips(&col))?;
            slot.insert(HermitianEigen::new(&h).map_err(|_| Error::Eigensolve(k))?);
        }
        x = cache[&key].exp(dt) * x;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct EvolvedState {
    pub state: StateVector,
    /// |‖ψ(T)‖ − 1|.
    pub norm_drift: f64,
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn check_normalized(v: &[Complex64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// ψ(T) = X_M ⋯ X_1 ψ0 by Chebyshev action, one expansion per run of identical columns.
pub fn evolve_state(
    psi0: &[Complex64],
    layout: &LadderLayout,
    params: &PhysicalParams,
    disorder: &DisorderRealization,
    controls: &ControlMatrix,
) -> Result<EvolvedState> {
    let model = RwaModel::new(layout, params, disorder)?;
    evolve_state_model(&model, psi0, controls)
}

pub fn evolve_state_model(model: &RwaModel, psi0: &[Complex64], controls: &ControlMatrix) -> Result<EvolvedState> {
    if psi0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: psi0.len(),
        });
    }
    check_normalized(psi0)?;
    controls.validate()?;
    let mut psi = psi0.to_vec();
    for (col, dt) in controls.runs() {
        psi = expm_action(model, &model.flips(&col), &psi, dt, 1.0);
    }
    let norm_drift = (norm(&psi) - 1.0).abs();
    Ok(EvolvedState { state: psi, norm_drift })
}

pub fn apply_operator(x: &OperatorMatrix, psi: &[Complex64]) -> StateVector {
    (x * DVector::from_column_slice(psi)).iter().copied().collect()
}

/// max_ij |(X†X − 1)_ij|.
pub fn unitarity_defect(x: &OperatorMatrix) -> f64 {
    let d = x.nrows();
    let g = x.adjoint() * x;
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in 0..d {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((g[(r, c)] - target).norm());
        }
    }
    worst
}
