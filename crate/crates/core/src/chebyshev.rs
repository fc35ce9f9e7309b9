//! Chebyshev expansion of e^{∓iHt} acting on vectors, for Hamiltonians
//! given only through matrix-vector products.

use num_complex::Complex64;

use crate::hamiltonian::{Flip, RwaModel};

/// Truncation threshold on |J_n(x)| relative to the leading terms.
const TAIL_TOL: f64 = 1e-17;

/// J_0(x), …, J_{n_max}(x) for x ≥ 0 by Miller's backward recurrence,
/// normalized with J_0 + 2 Σ J_{2k} = 1.
pub fn bessel_j_sequence(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = n_max.max(x.ceil() as usize);
    let mut start = top + 32 + (40.0 * top.max(1) as f64).sqrt() as usize;
    start += start % 2;
    let (mut j_next, mut j) = (0.0f64, 1e-280f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j - j_next;
        j_next = j;
        j = j_prev;
        // j is now J_{k-1}
        if k - 1 <= n_max {
            out[k - 1] = j;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            j_next *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm += j;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Number of expansion terms needed for argument x.
pub fn n_terms(x: f64) -> usize {
    let n_max = (x + 10.0 * x.max(1.0).cbrt() + 30.0).ceil() as usize;
    let j = bessel_j_sequence(x, n_max);
    let mut k = n_max;
    while k > 0 && k as f64 > x && j[k].abs() < TAIL_TOL && j[k - 1].abs() < TAIL_TOL {
        k -= 1;
    }
    k + 1
}

/// Spectrum enclosure H = c + r H̃ with spec(H̃) ⊂ [−1, 1].
#[derive(Debug, Clone, Copy)]
pub struct Scaling {
    pub center: f64,
    pub half_width: f64,
}

impl Scaling {
    pub fn new(model: &RwaModel, flips: &[Flip]) -> Self {
        let (lo, hi) = model.spectral_bounds(flips);
        let half_width = 0.5 * (hi - lo) * (1.0 + 1e-12) + 1e-12;
        Self {
            center: 0.5 * (hi + lo),
            half_width,
        }
    }

    /// Expansion coefficients of e^{−i·sign·H·t}: e^{−i·sign·c·t} a_n J_n(r t)
    /// with a_0 = 1, a_n = 2(−i·sign)^n.
    pub fn coefficients(&self, t: f64, sign: f64, n: usize) -> Vec<Complex64> {
        let j = bessel_j_sequence(self.half_width * t, n.saturating_sub(1));
        let phase = Complex64::from_polar(1.0, -sign * self.center * t);
        let step = Complex64::new(0.0, -sign);
        let mut power = Complex64::new(1.0, 0.0);
        j.iter()
            .enumerate()
            .map(|(k, &jk)| {
                let a = if k == 0 { 1.0 } else { 2.0 };
                let c = phase * power * (a * jk);
                power *= step;
                c
            })
            .collect()
    }
}

/// Applies H̃ = (H − c)/r: out = H̃ v.
fn apply_scaled(model: &RwaModel, flips: &[Flip], s: &Scaling, v: &[Complex64], out: &mut [Complex64]) {
    model.apply(flips, v, out);
    let inv = 1.0 / s.half_width;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (*o - x * s.center) * inv;
    }
}

/// w = e^{−i·sign·H·t} v without storing the Chebyshev vectors.
pub fn expm_action(model: &RwaModel, flips: &[Flip], v: &[Complex64], t: f64, sign: f64) -> Vec<Complex64> {
    let s = Scaling::new(model, flips);
    let n = n_terms(s.half_width * t);
    let coef = s.coefficients(t, sign, n);
    let d = v.len();
    let mut prev = v.to_vec();
    let mut out: Vec<Complex64> = v.iter().map(|&x| x * coef[0]).collect();
    if n == 1 {
        return out;
    }
    let mut cur = vec![Complex64::new(0.0, 0.0); d];
    apply_scaled(model, flips, &s, v, &mut cur);
    for (o, &c) in out.iter_mut().zip(&cur) {
        *o += c * coef[1];
    }
    let mut next = vec![Complex64::new(0.0, 0.0); d];
    for &ck in &coef[2..] {
        apply_scaled(model, flips, &s, &cur, &mut next);
        for ((nx, &pv), o) in next.iter_mut().zip(&prev).zip(out.iter_mut()) {
            *nx = 2.0 * *nx - pv;
            *o += *nx * ck;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

/// Stored Chebyshev vectors T_n(H̃) v, n < n_terms, for reuse at several times.
pub struct ChebyshevBasis {
    pub scaling: Scaling,
    pub vectors: Vec<Vec<Complex64>>,
}

impl ChebyshevBasis {
    /// Basis sufficient for any time in [0, t_max].
    pub fn new(model: &RwaModel, flips: &[Flip], v: &[Complex64], t_max: f64) -> Self {
        let scaling = Scaling::new(model, flips);
        let n = n_terms(scaling.half_width * t_max);
        let d = v.len();
        let mut vectors = Vec::with_capacity(n);
        vectors.push(v.to_vec());
        if n > 1 {
            let mut t1 = vec![Complex64::new(0.0, 0.0); d];
            apply_scaled(model, flips, &scaling, v, &mut t1);
            vectors.push(t1);
        }
        for k in 2..n {
            let mut next = vec![Complex64::new(0.0, 0.0); d];
            apply_scaled(model, flips, &scaling, &vectors[k - 1], &mut next);
            for (nx, &pv) in next.iter_mut().zip(&vectors[k - 2]) {
                *nx = 2.0 * *nx - pv;
            }
            vectors.push(next);
        }
        Self { scaling, vectors }
    }

    /// e^{−i·sign·H·t} v.
    pub fn evaluate(&self, t: f64, sign: f64) -> Vec<Complex64> {
        let coef = self.scaling.coefficients(t, sign, self.vectors.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.vectors[0].len()];
        for (c, vec) in coef.iter().zip(&self.vectors) {
            if c.norm() < 1e-300 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(vec) {
                *o += x * c;
            }
        }
        out
    }
}
