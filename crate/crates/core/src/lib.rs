//! Quantum transport with Bohmian conditional wave functions.
//!
//! Each simulated electron carries its own conditional wave function (CWF)
//! and a Bohmian trajectory guided by it. Electron-phonon collisions are
//! stochastic momentum kicks applied to the CWF. The crate provides:
//!
//! * [`field`]: uniform periodic grids, scalar and bispinor fields, spectral
//!   transforms and observables.
//! * [`schrodinger`]: split-step propagation of 1D parabolic-band CWFs.
//! * [`dirac`]: split-step propagation of 2D graphene bispinors and the
//!   band-resolving collision operator.
//! * [`bohm`]: trajectory sampling and integration, the ensemble density
//!   matrix and its positivity diagnostics.
//! * [`scattering`]: collision rates and event selection.
//! * [`device`]: resonant-tunneling-diode simulation, current estimators,
//!   I-V sweeps and the graphene presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bohm;
pub mod device;
pub mod dirac;
pub mod error;
pub mod field;
pub mod scattering;
pub mod schrodinger;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
