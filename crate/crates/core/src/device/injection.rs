use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{DeviceSpec, Layout, SimulationParams};
use crate::bohm::{sample_positions, Trajectory1D, VelocityField1D};
use crate::error::Result;
use crate::field::ComplexField1D;
use crate::schrodinger::{KickRepresentation, KickState};
use crate::units::{ev_to_joule, thermal_energy, HBAR, NM, PLANCK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    Left,
    Right,
}

impl Contact {
    pub fn as_str(self) -> &'static str {
        match self {
            Contact::Left => "left",
            Contact::Right => "right",
        }
    }
}

/// One simulated electron: its conditional wave function, the Bohmian
/// trajectory it guides, and its collision state.
#[derive(Debug, Clone)]
pub struct ElectronBundle {
    pub field: ComplexField1D,
    pub trajectory: Trajectory1D,
    pub kick: KickState,
    pub injection_time: f64,
    pub contact_of_origin: Contact,
    pub collisions: u32,
    /// Time spent between the contacts, s.
    pub device_time: f64,
    /// Whether the trajectory has been between the contacts.
    pub entered: bool,
    pub(crate) velocity: VelocityField1D,
    pub(crate) rng: ChaCha8Rng,
}

impl ElectronBundle {
    /// Bundle whose trajectory is drawn from `|field|^2` with a random stream
    /// derived from `(seed, id)`.
    pub fn new(
        id: u64,
        field: ComplexField1D,
        mass: f64,
        contact: Contact,
        time: f64,
        sub_kicks: u32,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = bundle_rng(seed, id);
        let x = sample_positions(&field, 1, &mut rng)?[0];
        Self::with_position(id, field, x, mass, contact, time, sub_kicks, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn with_position(
        id: u64,
        field: ComplexField1D,
        x: f64,
        mass: f64,
        contact: Contact,
        time: f64,
        sub_kicks: u32,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        Ok(ElectronBundle {
            velocity: VelocityField1D::new(&field, mass)?,
            field,
            trajectory: Trajectory1D::new(id, [x]),
            kick: KickState::new(sub_kicks, KickRepresentation::Phase),
            injection_time: time,
            contact_of_origin: contact,
            collisions: 0,
            device_time: 0.0,
            entered: false,
            rng,
        })
    }

    pub fn id(&self) -> u64 {
        self.trajectory.id
    }
}

pub(crate) fn bundle_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + id);
    rng
}

pub(crate) fn contact_rng(seed: u64, contact: Contact) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match contact {
        Contact::Left => 0,
        Contact::Right => 1,
    });
    rng
}

/// Thermal electron flux (1/s, both spins) entering through one contact:
/// `(2 kT / h) ln(1 + exp(E_f / kT))`, tending to `2 E_f / h` as `T -> 0`.
/// Both contacts share the same Fermi level relative to their band edge.
pub fn injection_rate(device: &DeviceSpec, _contact: Contact) -> f64 {
    let ef = ev_to_joule(device.fermi_level_ev);
    let kt = thermal_energy(device.temperature_k);
    let per_energy = 2.0 / PLANCK;
    if kt == 0.0 {
        return per_energy * ef.max(0.0);
    }
    per_energy * kt * softplus(ef / kt)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Kinetic energy (J) above the contact band edge of an injected electron,
/// drawn from the flux distribution `f_FD(E)` on `E >= 0`. Returns `None`
/// when no state is occupied.
pub fn sample_injection_energy<R: Rng + ?Sized>(device: &DeviceSpec, rng: &mut R) -> Option<f64> {
    let ef = ev_to_joule(device.fermi_level_ev);
    let kt = thermal_energy(device.temperature_k);
    let u: f64 = rng.random();
    if kt == 0.0 {
        return (ef > 0.0).then_some(u * ef);
    }
    let total = softplus(ef / kt);
    // Invert F(E) = kT [L0 - ln(1 + exp((E_f - E)/kT))] at F = u kT L0.
    let e = ef - kt * ((1.0 - u) * total).exp_m1().ln();
    Some(e.max(0.0))
}

/// New electrons entering through `contact` during one step of length `dt`.
/// Arrivals are Poisson with the thermal flux rate times
/// `params.injection_fraction`; each becomes a Gaussian
/// packet of width `params.packet_sigma_nm` centred outside the contact and
/// moving into the device. `next_id` is advanced for each bundle.
#[allow(clippy::too_many_arguments)]
pub fn inject<R: Rng + ?Sized>(
    contact: Contact,
    device: &DeviceSpec,
    layout: &Layout,
    params: &SimulationParams,
    dt: f64,
    time: f64,
    rng: &mut R,
    next_id: &mut u64,
    seed: u64,
) -> Result<Vec<ElectronBundle>> {
    let mean = injection_rate(device, contact) * params.injection_fraction * dt;
    if !(mean > 0.0) {
        return Ok(Vec::new());
    }
    let count = Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0);
    let sigma = params.packet_sigma_nm * NM;
    let offset = params.injection_offset_sigmas * sigma;
    let mass = device.mass();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let Some(energy) = sample_injection_energy(device, rng) else {
            continue;
        };
        let k = (2.0 * mass * energy).sqrt() / HBAR;
        let (center, k) = match contact {
            Contact::Left => (layout.device_start() - offset, k),
            Contact::Right => (layout.device_end() + offset, -k),
        };
        let field = ComplexField1D::gaussian(*layout.grid(), center, sigma, k);
        let id = *next_id;
        *next_id += 1;
        out.push(ElectronBundle::new(id, field, mass, contact, time, params.sub_kicks, seed)?);
    }
    Ok(out)
}
