//! Thermalization of a single-mode "thermometer" coupled to a three-mode
//! Bose-Hubbard "bath".
//!
//! The crate covers both sides of the problem:
//!
//! * quantum: symmetry-adapted Fock bases ([`basis`]), the sector Hamiltonian
//!   ([`hamiltonian`]), dense diagonalization and level statistics
//!   ([`spectral`]), and exact spectral propagation of uncoupled eigenstates
//!   ([`qdyn`]);
//! * classical: the symmetrized mean-field Hamiltonian, adaptive integration,
//!   microcanonical ensembles and Poincaré sections ([`meanfield`]);
//! * orchestration of coupling sweeps, threshold location and scaling fits
//!   ([`analysis`]).
//!
//! Units: Ω = 1, ħ = 1, k_B = 1. Entropies use the natural logarithm.

extern crate blas_src;
extern crate openblas_src;

pub mod analysis;
pub mod basis;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod meanfield;
pub mod qdyn;
pub mod spectral;

pub use error::{Error, Result};
