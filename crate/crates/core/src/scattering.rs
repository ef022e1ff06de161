//! Stochastic electron-phonon collisions.
//!
//! Rates are configuration inputs. Per global time step an electron collides
//! with probability `1 - exp(-Gamma dt)`; the mechanism is then picked in
//! proportion to its rate and its kinematics decide the momentum transfer.
//! At most one mechanism fires per electron per step.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dirac::{wavevector_angle, BandIndex};
use crate::error::{Error, Result};
use crate::units::{ev_to_joule, joule_to_ev, thermal_energy, FERMI_VELOCITY, HBAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    AcousticElastic,
    ImpurityElastic,
    OpticalEmission,
    OpticalAbsorption,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::AcousticElastic,
        MechanismKind::ImpurityElastic,
        MechanismKind::OpticalEmission,
        MechanismKind::OpticalAbsorption,
    ];

    pub fn is_elastic(self) -> bool {
        matches!(self, MechanismKind::AcousticElastic | MechanismKind::ImpurityElastic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::AcousticElastic => "acoustic_elastic",
            MechanismKind::ImpurityElastic => "impurity_elastic",
            MechanismKind::OpticalEmission => "optical_emission",
            MechanismKind::OpticalAbsorption => "optical_absorption",
        }
    }
}

/// One scattering channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    pub kind: MechanismKind,
    /// Attempt rate, 1/s.
    pub rate: f64,
    /// Phonon energy in eV; zero for elastic channels.
    pub phonon_energy: f64,
    /// Lattice temperature in K, sets the Bose occupation.
    pub temperature: f64,
}

impl Mechanism {
    pub fn new(kind: MechanismKind, rate: f64, phonon_energy: f64, temperature: f64) -> Result<Self> {
        let m = Mechanism {
            kind,
            rate,
            phonon_energy,
            temperature,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn elastic(kind: MechanismKind, rate: f64, temperature: f64) -> Result<Self> {
        Self::new(kind, rate, 0.0, temperature)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::invalid("rate", format!("{} must be >= 0", self.rate)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid("temperature", "must be >= 0"));
        }
        if self.kind.is_elastic() != (self.phonon_energy == 0.0) {
            return Err(Error::invalid(
                "phonon_energy",
                "must be zero exactly for elastic mechanisms",
            ));
        }
        if !(self.phonon_energy.is_finite() && self.phonon_energy >= 0.0) {
            return Err(Error::invalid("phonon_energy", "must be >= 0"));
        }
        Ok(())
    }

    /// Bose-Einstein occupation `N = 1 / (exp(hbar w / kT) - 1)`.
    pub fn bose_occupation(&self) -> f64 {
        bose_occupation(self.phonon_energy, self.temperature)
    }

    /// Probability that a selected absorption attempt is accepted,
    /// `N / (N + 1)`; one for every other channel.
    pub fn acceptance(&self) -> f64 {
        match self.kind {
            MechanismKind::OpticalAbsorption => {
                let n = self.bose_occupation();
                n / (n + 1.0)
            }
            _ => 1.0,
        }
    }
}

pub fn bose_occupation(phonon_energy_ev: f64, temperature_k: f64) -> f64 {
    let kt = thermal_energy(temperature_k);
    if kt == 0.0 || phonon_energy_ev == 0.0 {
        return 0.0;
    }
    1.0 / (ev_to_joule(phonon_energy_ev) / kt).exp_m1()
}

/// GaAs optical-phonon energy, eV.
pub const GAAS_OPTICAL_PHONON_EV: f64 = 0.036;

/// Default GaAs channel table at `temperature` K. Rates are representative
/// magnitudes for bulk GaAs near the conduction-band edge (1e12..1e13 1/s)
/// and are meant to be overridden.
pub fn gaas_default_mechanisms(temperature: f64) -> Vec<Mechanism> {
    vec![
        Mechanism {
            kind: MechanismKind::AcousticElastic,
            rate: 2.0e12,
            phonon_energy: 0.0,
            temperature,
        },
        Mechanism {
            kind: MechanismKind::ImpurityElastic,
            rate: 3.0e12,
            phonon_energy: 0.0,
            temperature,
        },
        Mechanism {
            kind: MechanismKind::OpticalEmission,
            rate: 1.0e13,
            phonon_energy: GAAS_OPTICAL_PHONON_EV,
            temperature,
        },
        Mechanism {
            kind: MechanismKind::OpticalAbsorption,
            rate: 1.0e13,
            phonon_energy: GAAS_OPTICAL_PHONON_EV,
            temperature,
        },
    ]
}

/// A sampled collision outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub mechanism: MechanismKind,
    /// Momentum transfer `q` (1/m); 1D events use `q[0]` only.
    pub q: [f64; 2],
    /// Energy change of the electron, eV.
    pub delta_e_ev: f64,
    /// 1 when the event moves a Dirac electron to the other band.
    pub band_flip: u8,
    /// Collision instant, s.
    pub time: f64,
}

impl CollisionEvent {
    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

pub fn collision_probability(total_rate: f64, dt: f64) -> f64 {
    -(-total_rate * dt).exp_m1()
}

pub fn total_rate(mechanisms: &[Mechanism]) -> f64 {
    mechanisms.iter().map(|m| m.rate).sum()
}

/// Pick a channel with probability proportional to its rate.
pub fn choose_mechanism<'a, R: Rng + ?Sized>(
    mechanisms: &'a [Mechanism],
    rng: &mut R,
) -> Option<&'a Mechanism> {
    let total = total_rate(mechanisms);
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for m in mechanisms {
        if u < m.rate {
            return Some(m);
        }
        u -= m.rate;
    }
    mechanisms.iter().rev().find(|m| m.rate > 0.0)
}

/// Collision outcome for a parabolic-band electron with wavenumber `k` (1/m,
/// signed, 1D) and effective mass `mass` (kg).
///
/// Elastic channels backscatter (`q = -2k`). Optical channels change the
/// kinetic energy by `-/+ hbar w` and pick the final direction uniformly;
/// emission below the phonon energy and Bose-rejected absorption attempts
/// yield `None`.
pub fn select_event_parabolic<R: Rng + ?Sized>(
    k: f64,
    mass: f64,
    mechanisms: &[Mechanism],
    rng: &mut R,
) -> Option<CollisionEvent> {
    let mech = choose_mechanism(mechanisms, rng)?;
    if rng.random::<f64>() >= mech.acceptance() {
        return None;
    }
    let event = |q: f64, delta_e_ev: f64| CollisionEvent {
        mechanism: mech.kind,
        q: [q, 0.0],
        delta_e_ev,
        band_flip: 0,
        time: 0.0,
    };
    if mech.kind.is_elastic() {
        if k == 0.0 {
            return None;
        }
        return Some(event(-2.0 * k, 0.0));
    }
    let energy = HBAR * HBAR * k * k / (2.0 * mass);
    let delta = match mech.kind {
        MechanismKind::OpticalEmission => -ev_to_joule(mech.phonon_energy),
        _ => ev_to_joule(mech.phonon_energy),
    };
    let final_energy = energy + delta;
    if final_energy < 0.0 {
        return None;
    }
    let k_final = (2.0 * mass * final_energy).sqrt() / HBAR;
    let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Some(event(direction * k_final - k, joule_to_ev(delta)))
}

/// Pseudospin overlap `|(1 + s0 sf exp(i(beta0 - betaf))) / 2|^2` between
/// graphene eigenstates at angles `beta0`, `betaf` in bands `s0`, `sf`.
pub fn pseudospin_weight(s0: BandIndex, sf: BandIndex, beta0: f64, betaf: f64) -> f64 {
    let ss = (s0.sign() * sf.sign()) as f64;
    let d = beta0 - betaf;
    // |1 + ss e^{id}|^2 / 4 = (1 + ss cos d) / 2
    0.5 * (1.0 + ss * d.cos())
}

/// Collision outcome for a graphene electron at wave vector `k0` in `band`.
///
/// The final energy is `E0` (elastic) or `E0 -/+ hbar w`; its sign fixes the
/// final band and its magnitude `|kf|`. The final direction is drawn with
/// density proportional to [`pseudospin_weight`].
pub fn select_event_dirac<R: Rng + ?Sized>(
    k0: [f64; 2],
    band: BandIndex,
    mechanisms: &[Mechanism],
    rng: &mut R,
) -> Option<CollisionEvent> {
    let k0_abs = k0[0].hypot(k0[1]);
    if k0_abs == 0.0 {
        return None;
    }
    let mech = choose_mechanism(mechanisms, rng)?;
    if rng.random::<f64>() >= mech.acceptance() {
        return None;
    }
    let e0 = band.sign() as f64 * HBAR * FERMI_VELOCITY * k0_abs;
    let delta = match mech.kind {
        MechanismKind::OpticalEmission => -ev_to_joule(mech.phonon_energy),
        MechanismKind::OpticalAbsorption => ev_to_joule(mech.phonon_energy),
        _ => 0.0,
    };
    let ef = e0 + delta;
    if ef == 0.0 {
        return None;
    }
    let band_f = if ef > 0.0 {
        BandIndex::CONDUCTION
    } else {
        BandIndex::VALENCE
    };
    let kf_abs = ef.abs() / (HBAR * FERMI_VELOCITY);
    let beta0 = wavevector_angle(k0);
    let betaf = loop {
        let candidate = beta0 + (2.0 * rng.random::<f64>() - 1.0) * PI;
        if rng.random::<f64>() < pseudospin_weight(band, band_f, beta0, candidate) {
            break candidate;
        }
    };
    let kf = [kf_abs * betaf.cos(), kf_abs * betaf.sin()];
    Some(CollisionEvent {
        mechanism: mech.kind,
        q: [kf[0] - k0[0], kf[1] - k0[1]],
        delta_e_ev: joule_to_ev(delta),
        band_flip: u8::from(band_f != band),
        time: 0.0,
    })
}
