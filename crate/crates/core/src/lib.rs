//! Simulation and pulse optimization for a globally driven superconducting
//! ladder processor.
//!
//! Time is in ns and angular frequencies in rad/ns, with ħ = 1.

// NaN-rejecting range checks are written as !(x >= lo).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod chebyshev;
pub mod error;
pub mod experiments;
pub mod fidelity;
pub mod grape;
pub mod hamiltonian;
pub mod lattice;
pub mod propagate;
pub mod protocols;
pub mod pulses;
pub mod quadrature;

pub use error::{Error, Result};
