//! Physical constants (CODATA 2018) and unit conversions. Everything inside
//! the crate is SI; eV and nm only appear at configuration boundaries.

pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Graphene Fermi velocity, m/s.
pub const FERMI_VELOCITY: f64 = 1.0e6;

pub const NM: f64 = 1.0e-9;
pub const FS: f64 = 1.0e-15;
pub const PS: f64 = 1.0e-12;

#[inline]
pub fn ev_to_joule(ev: f64) -> f64 {
    ev * ELEMENTARY_CHARGE
}

#[inline]
pub fn joule_to_ev(j: f64) -> f64 {
    j / ELEMENTARY_CHARGE
}

/// Thermal energy k_B T in joules.
#[inline]
pub fn thermal_energy(temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k
}
