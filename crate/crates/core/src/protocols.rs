//! Protocol catalog: layout, naive schedule and ICC placement for each
//! studied operation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{ideal_apply_schedule, make_icc_state, IccState};
use crate::hamiltonian::PhysicalParams;
use crate::lattice::{build_ladder, build_reversed_h, build_row, LadderLayout};
use crate::propagate::StateVector;
use crate::pulses::{cz_sequence, hadamard_sequence, schedule_to_controls, shift_sequence, ControlMatrix, Direction, PulseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolId {
    /// No pulses; the target is the initial state.
    Identity,
    /// One shift with the interface on a B column.
    InfoFlowB,
    /// One shift with the interface on an A column.
    InfoFlowA,
    Hadamard,
    Cz,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 5] = [
        ProtocolId::Identity,
        ProtocolId::InfoFlowB,
        ProtocolId::InfoFlowA,
        ProtocolId::Hadamard,
        ProtocolId::Cz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Identity => "identity",
            ProtocolId::InfoFlowB => "info_flow_b",
            ProtocolId::InfoFlowA => "info_flow_a",
            ProtocolId::Hadamard => "hadamard",
            ProtocolId::Cz => "cz",
        }
    }

    /// Seven-qubit layout used for optimization.
    pub fn default_layout(self) -> LayoutChoice {
        match self {
            ProtocolId::Cz => LayoutChoice::ReversedH,
            _ => LayoutChoice::Row7,
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol '{s}'")))
    }
}

/// `row7` (crossed B at column 2), `reversed_h`, or `ladder<N>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayoutChoice {
    Row7,
    ReversedH,
    Ladder(usize),
}

impl LayoutChoice {
    pub fn build(self) -> Result<LadderLayout> {
        match self {
            LayoutChoice::Row7 => {
                let mut l = build_row(7)?.with_crossed(2)?;
                l.name = "row7".into();
                Ok(l)
            }
            LayoutChoice::ReversedH => Ok(build_reversed_h()),
            LayoutChoice::Ladder(n) => build_ladder(n),
        }
    }
}

impl fmt::Display for LayoutChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutChoice::Row7 => f.write_str("row7"),
            LayoutChoice::ReversedH => f.write_str("reversed_h"),
            LayoutChoice::Ladder(n) => write!(f, "ladder{n}"),
        }
    }
}

impl FromStr for LayoutChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row7" => Ok(LayoutChoice::Row7),
            "reversed_h" => Ok(LayoutChoice::ReversedH),
            _ => s
                .strip_prefix("ladder")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n > 0)
                .map(LayoutChoice::Ladder)
                .ok_or_else(|| Error::Config(format!("unknown layout '{s}'"))),
        }
    }
}

impl TryFrom<String> for LayoutChoice {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayoutChoice> for String {
    fn from(l: LayoutChoice) -> String {
        l.to_string()
    }
}

/// A protocol bound to a layout and physical parameters.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub id: ProtocolId,
    pub layout_choice: LayoutChoice,
    pub layout: LadderLayout,
    pub schedule: PulseSchedule,
    /// ICC placement; `p` and `phi` are filled per initial state.
    pub icc: IccState,
}

impl Protocol {
    pub fn new(id: ProtocolId, params: &PhysicalParams, layout_choice: LayoutChoice) -> Result<Self> {
        let layout = layout_choice.build()?;
        let mismatch = |reason: &str| Error::Protocol {
            protocol: id.name().into(),
            reason: format!("{reason} on layout {layout_choice}"),
        };
        let grid = !matches!(layout_choice, LayoutChoice::ReversedH);
        let (schedule, position) = match id {
            ProtocolId::Identity => (PulseSchedule::new("identity", vec![]), if grid { 2 } else { 1 }),
            ProtocolId::InfoFlowB | ProtocolId::InfoFlowA if grid => {
                let col = if id == ProtocolId::InfoFlowB { 2 } else { 3 };
                (shift_sequence(params, Direction::Right, true), col)
            }
            ProtocolId::Hadamard if grid => (hadamard_sequence(params, crate::lattice::Species::of_column(2))?, 2),
            ProtocolId::Cz => match layout_choice {
                LayoutChoice::ReversedH => (cz_sequence(params), 1),
                LayoutChoice::Ladder(n) if n >= 2 => (cz_sequence(params), 2),
                _ => return Err(mismatch("needs two rows joined by a crossed A coupler")),
            },
            _ => return Err(mismatch("needs a row with a crossed B qubit")),
        };
        Ok(Self {
            id,
            layout_choice,
            layout,
            schedule,
            icc: IccState::new(0.0, 0.0, position),
        })
    }

    /// The protocol on its seven-qubit optimization layout.
    pub fn standard(id: ProtocolId, params: &PhysicalParams) -> Result<Self> {
        Self::new(id, params, id.default_layout())
    }

    pub fn icc_state(&self, p: f64, phi: f64) -> IccState {
        IccState { p, phi, ..self.icc }
    }

    pub fn initial_state(&self, p: f64, phi: f64) -> Result<StateVector> {
        make_icc_state(&self.layout, &self.icc_state(p, phi))
    }

    /// Ideal blockade-model image of the initial state.
    pub fn target_state(&self, params: &PhysicalParams, p: f64, phi: f64) -> Result<StateVector> {
        let mut psi = self.initial_state(p, phi)?;
        ideal_apply_schedule(&self.layout, params, &self.schedule, &mut psi);
        Ok(psi)
    }

    /// Largest slot ≤ `max_slot` on which the naive schedule is exact.
    pub fn natural_slot(&self, max_slot: f64) -> f64 {
        self.schedule.natural_slot(max_slot).unwrap_or(max_slot)
    }

    pub fn naive_controls(&self, slot: f64) -> Result<ControlMatrix> {
        schedule_to_controls(&self.schedule, slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::overlap;

    #[test]
    fn names_round_trip() {
        for id in ProtocolId::ALL {
            assert_eq!(id.name().parse::<ProtocolId>().unwrap(), id);
        }
        for l in [LayoutChoice::Row7, LayoutChoice::ReversedH, LayoutChoice::Ladder(2)] {
            assert_eq!(l.to_string().parse::<LayoutChoice>().unwrap(), l);
        }
        assert!("ladder0".parse::<LayoutChoice>().is_err());
    }

    #[test]
    fn mismatched_layouts_rejected() {
        let p = PhysicalParams::standard(20.0).unwrap();
        assert!(Protocol::new(ProtocolId::Cz, &p, LayoutChoice::Row7).is_err());
        assert!(Protocol::new(ProtocolId::Hadamard, &p, LayoutChoice::ReversedH).is_err());
    }

    #[test]
    fn shift_moves_classical_pattern() {
        let p = PhysicalParams::standard(20.0).unwrap();
        let proto = Protocol::standard(ProtocolId::InfoFlowB, &p).unwrap();
        let t = proto.target_state(&p, 0.0, 0.0).unwrap();
        let (idx, amp) = t.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap();
        assert!((amp.norm() - 1.0).abs() < 1e-12);
        // Néel domain C0 flips to the other sublattice: A1 excited, ICC on A3
        assert_eq!(idx, 0b0000010);
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let p = PhysicalParams::standard(20.0).unwrap();
        let proto = Protocol::standard(ProtocolId::Hadamard, &p).unwrap();
        for &pp in &[0.0, 0.3, 1.0] {
            let mut psi = proto.initial_state(pp, 0.7).unwrap();
            let start = psi.clone();
            ideal_apply_schedule(&proto.layout, &p, &proto.schedule, &mut psi);
            ideal_apply_schedule(&proto.layout, &p, &proto.schedule, &mut psi);
            assert!((overlap(&start, &psi).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hadamard_of_zero_is_balanced() {
        let p = PhysicalParams::standard(20.0).unwrap();
        let proto = Protocol::standard(ProtocolId::Hadamard, &p).unwrap();
        let t = proto.target_state(&p, 0.0, 0.0).unwrap();
        let g = t[0b0000001].norm_sqr();
        let e = t[0b0000101].norm_sqr();
        assert!((g - 0.5).abs() < 1e-12 && (e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cz_flips_sign_of_one_branch() {
        let p = PhysicalParams::standard(20.0).unwrap();
        let proto = Protocol::standard(ProtocolId::Cz, &p).unwrap();
        let psi = proto.initial_state(0.5, 0.0).unwrap();
        let t = proto.target_state(&p, 0.5, 0.0).unwrap();
        let rel0 = t[0] / psi[0];
        let rel1 = t[0b10] / psi[0b10];
        assert!((rel0 + rel1).norm() < 1e-12, "{rel0} {rel1}");
    }
}
