//! Numerical laboratory for adiabatic linear response of one-dimensional lattice fermions.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice_model`]: Bloch Hamiltonians, Fermi points, current vertices, two-body potentials.
//! * [`free_theory`]: exact non-interacting Euclidean correlators at finite `beta`, `L`.
//! * [`exact_diag`]: Fock-space oracle for small chains (Gibbs states, cumulants, identity checks).
//! * [`adiabatic_dynamics`]: quasi-free real-time evolution and the full-vs-Kubo comparison.
//! * [`response_formulas`]: closed-form interacting response matrices.
//! * [`reference_model`]: cutoff chiral propagators, the anomalous bubble and chiral loops.

pub mod adiabatic_dynamics;
pub mod exact_diag;
pub mod fit;
pub mod free_theory;
pub mod lattice_model;
pub mod linalg;
pub mod quadrature;
pub mod reference_model;
pub mod report;
pub mod response_formulas;

pub use linalg::{CMat, C64};
