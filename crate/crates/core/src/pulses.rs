//! Global pulse schedules, the naive protocol sequences, and discretization
//! into piecewise-constant control matrices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{channel_index, PhysicalParams, N_CHANNELS};
use crate::lattice::Species;

/// Hardware floor on the control update interval, ns.
pub const MIN_SLOT: f64 = 0.5;

/// Channel amplitude of the naive protocols. Full scale (|u| = 1) drives
/// m_i Ω_χ σ, so the naive Rabi frequency Ω_χ sits at half scale.
pub const NAIVE_AMPLITUDE: f64 = 0.5;

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["A_x", "A_y", "B_x", "B_y", "C_x", "C_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub species: Species,
    /// Fraction of full channel scale, in (0, 1].
    pub amplitude: f64,
    pub phase: f64,
    /// ns.
    pub duration: f64,
}

impl PulseSegment {
    /// Segment rotating a regular qubit of `species` by `theta` about the
    /// equatorial axis at angle `phase`.
    pub fn rotation(params: &PhysicalParams, species: Species, phase: f64, theta: f64) -> Self {
        Self {
            species,
            amplitude: NAIVE_AMPLITUDE,
            phase,
            duration: theta / params.rabi(species),
        }
    }

    /// Rotation angle on a regular qubit: 2 a Ω_χ τ.
    pub fn theta(&self, params: &PhysicalParams) -> f64 {
        2.0 * self.amplitude * params.rabi(self.species) * self.duration
    }
}

/// Segments starting together; shorter segments are idle for the rest of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseWindow {
    pub segments: Vec<PulseSegment>,
}

impl PulseWindow {
    pub fn single(segment: PulseSegment) -> Self {
        Self { segments: vec![segment] }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub name: String,
    pub windows: Vec<PulseWindow>,
}

impl PulseSchedule {
    pub fn new(name: impl Into<String>, windows: Vec<PulseWindow>) -> Self {
        Self { name: name.into(), windows }
    }

    pub fn duration(&self) -> f64 {
        self.windows.iter().map(PulseWindow::duration).fold(0.0, |a, b| a + b)
    }

    pub fn segments(&self) -> impl Iterator<Item = &PulseSegment> {
        self.windows.iter().flat_map(|w| w.segments.iter())
    }

    /// Concatenation: `self` then `other`.
    pub fn then(mut self, other: &PulseSchedule) -> Self {
        self.windows.extend(other.windows.iter().cloned());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (k, w) in self.windows.iter().enumerate() {
            let has = |s: Species| w.segments.iter().filter(|seg| seg.species == s).count();
            if has(Species::A) > 0 && (has(Species::B) > 0 || has(Species::C) > 0) {
                return Err(Error::InvalidArgument(format!("window {k} drives A together with B/C")));
            }
            if Species::ALL.iter().any(|&s| has(s) > 1) {
                return Err(Error::InvalidArgument(format!("window {k} repeats a species")));
            }
            for seg in &w.segments {
                if !(seg.duration > 0.0) || !(seg.amplitude > 0.0 && seg.amplitude <= 1.0) {
                    return Err(Error::InvalidArgument(format!("window {k} has an invalid segment {seg:?}")));
                }
            }
        }
        Ok(())
    }

    /// Largest slot not above `max_slot` that divides every segment duration.
    pub fn natural_slot(&self, max_slot: f64) -> Option<f64> {
        let durations: Vec<f64> = self.segments().map(|s| s.duration).collect();
        let d_min = durations.iter().cloned().fold(f64::INFINITY, f64::min);
        if !d_min.is_finite() {
            return None;
        }
        let mut lcm = 1u64;
        for &d in &durations {
            let r = d / d_min;
            let den = (1..=64u64).find(|&q| {
                let x = r * q as f64;
                (x - x.round()).abs() < 1e-9 * x.max(1.0)
            })?;
            lcm = lcm / gcd(lcm, den) * den;
        }
        let quantum = d_min / lcm as f64;
        Some(quantum / (quantum / max_slot).ceil())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let out: Self = serde_json::from_str(s)?;
        out.validate()?;
        Ok(out)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

fn block(params: &PhysicalParams, species: &[Species], steps: &[(f64, f64)]) -> Vec<PulseWindow> {
    steps
        .iter()
        .map(|&(phase, theta)| PulseWindow {
            segments: species.iter().map(|&s| PulseSegment::rotation(params, s, phase, theta)).collect(),
        })
        .collect()
}

const PI_A_STEPS: [(f64, f64); 4] = [(0.0, PI / 2.0), (PI / 2.0, PI), (PI, PI / 2.0), (-PI / 2.0, PI)];
const PI_BC_STEPS: [(f64, f64); 4] = [(0.0, 3.0 * PI / 4.0), (PI / 2.0, PI), (PI, PI / 4.0), (-PI / 2.0, PI)];

/// Π_A Π_B Π_C Π_A. The sequence moves the interface in either direction, so
/// `direction` only labels the schedule. With `simultaneous`, the B and C
/// blocks share windows; otherwise Π_B runs before Π_C.
pub fn shift_sequence(params: &PhysicalParams, direction: Direction, simultaneous: bool) -> PulseSchedule {
    let mut windows = block(params, &[Species::A], &PI_A_STEPS);
    if simultaneous {
        windows.extend(block(params, &[Species::B, Species::C], &PI_BC_STEPS));
    } else {
        windows.extend(block(params, &[Species::B], &PI_BC_STEPS));
        windows.extend(block(params, &[Species::C], &PI_BC_STEPS));
    }
    windows.extend(block(params, &[Species::A], &PI_A_STEPS));
    let dir = match direction {
        Direction::Left => "left",
        Direction::Right => "right",
    };
    PulseSchedule::new(format!("shift_{dir}"), windows)
}

const U_H_STEPS: [(f64, f64); 4] = [(0.0, PI / 4.0), (PI / 2.0, PI / 2.0), (-PI / 4.0, 3.0 * PI / 4.0), (PI / 4.0, 3.0 * PI / 2.0)];

/// U_H† · Z_A(2π) · U_H with U_H on `target` (B or C).
pub fn hadamard_sequence(params: &PhysicalParams, target: Species) -> Result<PulseSchedule> {
    if target == Species::A {
        return Err(Error::InvalidArgument("Hadamard target must be B or C".into()));
    }
    let mut windows = block(params, &[target], &U_H_STEPS);
    windows.extend(block(params, &[Species::A], &[(0.0, 2.0 * PI)]));
    let adjoint: Vec<(f64, f64)> = U_H_STEPS.iter().rev().map(|&(phi, theta)| (phi + PI, theta)).collect();
    windows.extend(block(params, &[target], &adjoint));
    Ok(PulseSchedule::new(format!("hadamard_{target}"), windows))
}

const CZ_STEPS: [(f64, f64); 5] = [(PI / 2.0, PI / 4.0), (0.0, PI), (PI / 2.0, PI / 2.0), (0.0, PI), (PI / 2.0, PI / 4.0)];

/// Five-step A-only sequence.
pub fn cz_sequence(params: &PhysicalParams) -> PulseSchedule {
    PulseSchedule::new("cz", block(params, &[Species::A], &CZ_STEPS))
}

/// N×M piecewise-constant amplitudes, stored per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlFile", into = "ControlFile")]
pub struct ControlMatrix {
    /// `columns[k][j]` is u_jk.
    pub columns: Vec<[f64; N_CHANNELS]>,
    pub slot_durations: Vec<f64>,
    /// Σ |n_slots·slot − τ| over discretized segments, ns.
    pub rounding_error: f64,
}

impl ControlMatrix {
    pub fn zeros(m: usize, slot: f64) -> Self {
        Self {
            columns: vec![[0.0; N_CHANNELS]; m],
            slot_durations: vec![slot; m],
            rounding_error: 0.0,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.columns[k][j]
    }

    pub fn total_duration(&self) -> f64 {
        self.slot_durations.iter().fold(0.0, |a, b| a + b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() != self.slot_durations.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: self.slot_durations.len(),
            });
        }
        for col in &self.columns {
            crate::hamiltonian::check_amplitudes(col)?;
        }
        if let Some(dt) = self.slot_durations.iter().find(|&&dt| !(dt >= MIN_SLOT - 1e-12)) {
            return Err(Error::InvalidArgument(format!("slot {dt} ns below the {MIN_SLOT} ns floor")));
        }
        Ok(())
    }

    /// Concatenation in time: `self` first.
    pub fn concat(&self, other: &ControlMatrix) -> ControlMatrix {
        let mut out = self.clone();
        out.columns.extend_from_slice(&other.columns);
        out.slot_durations.extend_from_slice(&other.slot_durations);
        out.rounding_error += other.rounding_error;
        out
    }

    /// Runs of identical consecutive columns merged: (amplitudes, total duration).
    pub fn runs(&self) -> Vec<([f64; N_CHANNELS], f64)> {
        let mut out: Vec<([f64; N_CHANNELS], f64)> = Vec::new();
        for (col, &dt) in self.columns.iter().zip(&self.slot_durations) {
            match out.last_mut() {
                Some((c, t)) if c == col => *t += dt,
                _ => out.push((*col, dt)),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ControlFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl TryFrom<ControlFile> for ControlMatrix {
    type Error = Error;
    fn try_from(f: ControlFile) -> Result<Self> {
        let m = f.slot_ns.len();
        if f.channels.len() != N_CHANNELS || f.amplitudes.len() != N_CHANNELS || f.amplitudes.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("control file must hold 6 channel rows of equal length".into()));
        }
        let columns = (0..m).map(|k| std::array::from_fn(|j| f.amplitudes[j][k])).collect();
        let out = Self {
            columns,
            slot_durations: f.slot_ns,
            rounding_error: f.rounding_error_ns,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Interchange format: one amplitude row per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ControlFile {
    channels: Vec<String>,
    slot_ns: Vec<f64>,
    amplitudes: Vec<Vec<f64>>,
    #[serde(default)]
    rounding_error_ns: f64,
}

impl From<ControlMatrix> for ControlFile {
    fn from(c: ControlMatrix) -> Self {
        Self::from(&c)
    }
}

impl From<&ControlMatrix> for ControlFile {
    fn from(c: &ControlMatrix) -> Self {
        Self {
            channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            slot_ns: c.slot_durations.clone(),
            amplitudes: (0..N_CHANNELS).map(|j| c.columns.iter().map(|col| col[j]).collect()).collect(),
            rounding_error_ns: c.rounding_error,
        }
    }
}

/// Discretizes on a uniform grid. Each window and segment spans the nearest
/// whole number of slots; the accumulated rounding is recorded.
pub fn schedule_to_controls(schedule: &PulseSchedule, slot: f64) -> Result<ControlMatrix> {
    if !(slot >= MIN_SLOT) {
        return Err(Error::InvalidArgument(format!("slot {slot} ns below the {MIN_SLOT} ns floor")));
    }
    let mut columns = Vec::new();
    let mut rounding_error = 0.0;
    for w in &schedule.windows {
        let n_w = (w.duration() / slot).round() as usize;
        rounding_error += (n_w as f64 * slot - w.duration()).abs();
        let start = columns.len();
        columns.resize(start + n_w, [0.0; N_CHANNELS]);
        for seg in &w.segments {
            let n = ((seg.duration / slot).round() as usize).min(n_w);
            if seg.duration < w.duration() {
                rounding_error += (n as f64 * slot - seg.duration).abs();
            }
            let jx = channel_index(seg.species, false);
            let jy = channel_index(seg.species, true);
            for col in &mut columns[start..start + n] {
                col[jx] = seg.amplitude * seg.phase.cos();
                col[jy] = seg.amplitude * seg.phase.sin();
            }
        }
    }
    let m = columns.len();
    Ok(ControlMatrix {
        columns,
        slot_durations: vec![slot; m],
        rounding_error,
    })
}

/// Inverse of [`schedule_to_controls`] for piecewise-constant inputs: one
/// window per run of identical columns, one segment per active species.
pub fn controls_to_schedule(controls: &ControlMatrix, name: &str) -> PulseSchedule {
    let windows = controls
        .runs()
        .into_iter()
        .map(|(col, duration)| {
            let segments = Species::ALL
                .iter()
                .filter_map(|&s| {
                    let ux = col[channel_index(s, false)];
                    let uy = col[channel_index(s, true)];
                    let amplitude = ux.hypot(uy);
                    (amplitude > 0.0).then(|| PulseSegment {
                        species: s,
                        amplitude,
                        phase: uy.atan2(ux),
                        duration,
                    })
                })
                .collect();
            PulseWindow { segments }
        })
        .filter(|w: &PulseWindow| !w.segments.is_empty())
        .collect();
    PulseSchedule::new(name, windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64) -> PhysicalParams {
        PhysicalParams::standard(eta).unwrap()
    }

    #[test]
    fn shift_segments() {
        let p = params(20.0);
        let s = shift_sequence(&p, Direction::Right, true);
        s.validate().unwrap();
        let b1 = s.windows[4].segments.iter().find(|g| g.species == Species::B).unwrap();
        assert_eq!(b1.phase, 0.0);
        assert!((b1.duration - 0.75 * PI / p.rabi(Species::B)).abs() < 1e-9);
        assert!((b1.theta(&p) - 0.75 * PI).abs() < 1e-12);
        // 9π/Ω at Ω = 0.01 rad/ns
        assert!((s.duration() - 900.0 * PI).abs() < 1e-6);
        assert!((s.duration() - 2800.0).abs() < 50.0);
        let left = shift_sequence(&p, Direction::Left, true);
        assert_eq!(left.windows, s.windows);
        let seq = shift_sequence(&p, Direction::Right, false);
        seq.validate().unwrap();
        assert_eq!(seq.windows.len(), 16);
    }

    #[test]
    fn hadamard_segments() {
        let p = params(20.0);
        let h = hadamard_sequence(&p, Species::B).unwrap();
        h.validate().unwrap();
        assert_eq!(h.windows[1].segments[0].phase, PI / 2.0);
        assert!((h.windows[1].duration() - 0.5 * PI / 0.01).abs() < 1e-9);
        assert!((h.duration() - 2500.0).abs() < 20.0);
        assert!(hadamard_sequence(&p, Species::A).is_err());
    }

    #[test]
    fn cz_only_drives_a() {
        let p = params(20.0);
        let cz = cz_sequence(&p);
        assert!(cz.segments().all(|s| s.species == Species::A));
        assert!((cz.duration() - 940.0).abs() < 5.0);
    }

    #[test]
    fn empty_schedule_has_no_slots() {
        let c = schedule_to_controls(&PulseSchedule::new("empty", vec![]), 1.0).unwrap();
        assert_eq!(c.n_slots(), 0);
    }

    #[test]
    fn single_segment_discretization() {
        let s = PulseSchedule::new(
            "one",
            vec![PulseWindow::single(PulseSegment {
                species: Species::C,
                amplitude: 1.0,
                phase: 0.0,
                duration: 10.0,
            })],
        );
        let c = schedule_to_controls(&s, 1.0).unwrap();
        assert_eq!(c.n_slots(), 10);
        assert!(c.columns.iter().all(|col| col[4] == 1.0 && col[5] == 0.0));
        assert!(schedule_to_controls(&s, 0.4).is_err());
    }

    #[test]
    fn shift_slot_count_at_eta5() {
        let c = schedule_to_controls(&shift_sequence(&params(5.0), Direction::Right, true), 0.5).unwrap();
        assert!((c.n_slots() as f64 - 1414.0).abs() < 3.0, "{}", c.n_slots());
        assert!(c.rounding_error < 0.25 * 16.0);
    }

    #[test]
    fn natural_slot_is_exact() {
        let s = hadamard_sequence(&params(20.0), Species::B).unwrap();
        let slot = s.natural_slot(2.5).unwrap();
        assert!(slot <= 2.5 && slot > 2.0);
        let c = schedule_to_controls(&s, slot).unwrap();
        assert!(c.rounding_error < 1e-6);
        assert!((c.total_duration() - s.duration()).abs() < 1e-6);
    }

    #[test]
    fn control_json_round_trip() {
        let c = schedule_to_controls(&cz_sequence(&params(20.0)), 2.5).unwrap();
        let back = ControlMatrix::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
