//! Device-level experiments.
//!
//! The resonant-tunneling diode lives on a 1D grid larger than the device
//! itself: the device occupies the middle of the box, flanked by flat leads
//! where packets are injected, and absorbing layers at both box edges. Device
//! coordinates run from 0 (left contact) to `total_length` (right contact).

mod graphene;
mod injection;
mod run;

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use graphene::{
    graphene_collision_preset, graphene_collision_scenario, graphene_collision_scenario_on,
    klein_preset, klein_scenarios, klein_scenarios_on,
    run_dirac, DiracRecord, DiracSample, DiracScenario, ForcedCollision, GrapheneCase,
    KleinRecord, GRAPHENE_K0, KLEIN_BARRIER_EV, KLEIN_BARRIER_NM,
};
pub use injection::{
    inject, injection_rate, sample_injection_energy, Contact, ElectronBundle,
};
pub use run::{
    current_counting, current_ramo, iv_sweep, ChargeBookkeeping, CollisionStats, DeviceSimulation,
    ExitRecord, IvPoint, Outcome, PositivitySample, RunRecord, StepRecord,
};

use crate::error::{Error, Result};
use crate::field::Grid1D;
use crate::schrodinger::{quartic_absorber, Potential1D};
use crate::units::{ev_to_joule, ELECTRON_MASS, ELEMENTARY_CHARGE, NM, PS, FS, VACUUM_PERMITTIVITY};

/// A band-offset segment `[start, end)` in device coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub start_nm: f64,
    pub end_nm: f64,
    pub band_offset_ev: f64,
}

impl Region {
    pub fn new(start_nm: f64, end_nm: f64, band_offset_ev: f64) -> Self {
        Region {
            start_nm,
            end_nm,
            band_offset_ev,
        }
    }
}

/// Geometry, band profile, contacts and operating point of a 1D device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub total_length_nm: f64,
    pub regions: Vec<Region>,
    /// Fermi level above the conduction-band edge of each contact, eV.
    pub fermi_level_ev: f64,
    pub temperature_k: f64,
    pub effective_mass_ratio: f64,
    pub applied_bias_v: f64,
    pub relative_permittivity: f64,
    /// Cross-section over which each electron's charge is spread, nm^2.
    pub cross_section_nm2: f64,
}

impl DeviceSpec {
    /// GaAs double-barrier diode: 0.5 eV barriers 1.6 nm wide around a
    /// 2.4 nm well, centred in a 120 nm device.
    pub fn rtd() -> Self {
        let total = 120.0;
        let (barrier, well) = (1.6, 2.4);
        let b1 = 0.5 * total - 0.5 * well - barrier;
        let b2 = 0.5 * total + 0.5 * well;
        DeviceSpec {
            total_length_nm: total,
            regions: vec![
                Region::new(0.0, b1, 0.0),
                Region::new(b1, b1 + barrier, 0.5),
                Region::new(b1 + barrier, b2, 0.0),
                Region::new(b2, b2 + barrier, 0.5),
                Region::new(b2 + barrier, total, 0.0),
            ],
            fermi_level_ev: 0.15,
            temperature_k: 300.0,
            effective_mass_ratio: 0.067,
            applied_bias_v: 0.0,
            relative_permittivity: 12.9,
            cross_section_nm2: 1.0e4,
        }
    }

    pub fn with_bias(&self, bias_v: f64) -> Self {
        DeviceSpec {
            applied_bias_v: bias_v,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_length_nm > 0.0) {
            return Err(Error::invalid("total_length_nm", "must be positive"));
        }
        if self.regions.is_empty() {
            return Err(Error::invalid("regions", "at least one region is required"));
        }
        let tol = 1e-9 * self.total_length_nm;
        let mut cursor = 0.0;
        for r in &self.regions {
            if (r.start_nm - cursor).abs() > tol || !(r.end_nm > r.start_nm) {
                return Err(Error::invalid(
                    "regions",
                    format!(
                        "must tile [0, {}] in order; segment [{}, {}) breaks the tiling",
                        self.total_length_nm, r.start_nm, r.end_nm
                    ),
                ));
            }
            if !r.band_offset_ev.is_finite() {
                return Err(Error::invalid("regions", "band offsets must be finite"));
            }
            cursor = r.end_nm;
        }
        if (cursor - self.total_length_nm).abs() > tol {
            return Err(Error::invalid(
                "regions",
                format!("end at {cursor} nm instead of {} nm", self.total_length_nm),
            ));
        }
        if !self.fermi_level_ev.is_finite() {
            return Err(Error::invalid("fermi_level_ev", "must be finite"));
        }
        if !(self.temperature_k >= 0.0) {
            return Err(Error::invalid("temperature_k", "must be non-negative"));
        }
        if !(self.effective_mass_ratio > 0.0) {
            return Err(Error::invalid("effective_mass_ratio", "must be positive"));
        }
        if !self.applied_bias_v.is_finite() {
            return Err(Error::invalid("applied_bias_v", "must be finite"));
        }
        if !(self.relative_permittivity > 0.0) {
            return Err(Error::invalid("relative_permittivity", "must be positive"));
        }
        if !(self.cross_section_nm2 > 0.0) {
            return Err(Error::invalid("cross_section_nm2", "must be positive"));
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.effective_mass_ratio * ELECTRON_MASS
    }

    /// Device length, m.
    pub fn length(&self) -> f64 {
        self.total_length_nm * NM
    }

    /// Left and right contact positions in device coordinates, m.
    pub fn contact_positions(&self) -> [f64; 2] {
        [0.0, self.length()]
    }

    /// Band offset (J) at device coordinate `x` (m). Points within a
    /// picometre below a region boundary belong to the next region.
    pub fn band_offset_at(&self, x: f64) -> f64 {
        let x_nm = x / NM + 1e-3;
        let region = self
            .regions
            .iter()
            .find(|r| x_nm >= r.start_nm && x_nm < r.end_nm)
            .or_else(|| if x_nm < 0.0 { self.regions.first() } else { self.regions.last() });
        region.map_or(0.0, |r| ev_to_joule(r.band_offset_ev))
    }

    /// Highest band offset, eV.
    pub fn max_band_offset_ev(&self) -> f64 {
        self.regions.iter().map(|r| r.band_offset_ev).fold(0.0, f64::max)
    }
}

/// Numerical settings of a device run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationParams {
    pub grid_points: usize,
    pub grid_spacing_nm: f64,
    /// Absorbing-layer depth as a fraction of the box, each side.
    pub absorber_fraction: f64,
    pub absorber_strength_ev: f64,
    pub dt_fs: f64,
    pub duration_ps: f64,
    pub packet_sigma_nm: f64,
    /// Injection centre distance outside the contact, in packet widths.
    pub injection_offset_sigmas: f64,
    pub electron_cap: usize,
    /// Fraction of the thermal arrivals that are simulated.
    pub injection_fraction: f64,
    pub sub_kicks: u32,
    pub coulomb: bool,
    pub density_matrix_interval_ps: f64,
    pub density_matrix_dim: usize,
    /// Trajectory positions are recorded every this many steps.
    pub position_sample_steps: usize,
    /// An electron that has been inside the device is retired once it is
    /// this far outside either contact.
    pub exit_buffer_nm: f64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            grid_points: 1024,
            grid_spacing_nm: 0.8,
            absorber_fraction: 0.1,
            absorber_strength_ev: 0.5,
            dt_fs: 0.3,
            duration_ps: 5.0,
            packet_sigma_nm: 40.0,
            injection_offset_sigmas: 3.0,
            electron_cap: 16,
            injection_fraction: 1.0,
            sub_kicks: 1,
            coulomb: true,
            density_matrix_interval_ps: 0.5,
            density_matrix_dim: 256,
            position_sample_steps: 50,
            exit_buffer_nm: 40.0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_spacing_nm", self.grid_spacing_nm),
            ("dt_fs", self.dt_fs),
            ("duration_ps", self.duration_ps),
            ("packet_sigma_nm", self.packet_sigma_nm),
            ("density_matrix_interval_ps", self.density_matrix_interval_ps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.absorber_fraction > 0.0 && self.absorber_fraction < 0.5) {
            return Err(Error::invalid("absorber_fraction", "must lie in (0, 0.5)"));
        }
        if !(self.absorber_strength_ev >= 0.0) {
            return Err(Error::invalid("absorber_strength_ev", "must be non-negative"));
        }
        if !(self.exit_buffer_nm >= 0.0) {
            return Err(Error::invalid("exit_buffer_nm", "must be non-negative"));
        }
        if !(self.injection_offset_sigmas >= 0.0) {
            return Err(Error::invalid("injection_offset_sigmas", "must be non-negative"));
        }
        if !(self.injection_fraction > 0.0 && self.injection_fraction <= 1.0) {
            return Err(Error::invalid("injection_fraction", "must lie in (0, 1]"));
        }
        if self.electron_cap == 0 {
            return Err(Error::invalid("electron_cap", "must be at least 1"));
        }
        if self.density_matrix_dim < 2 {
            return Err(Error::invalid("density_matrix_dim", "must be at least 2"));
        }
        if self.position_sample_steps == 0 {
            return Err(Error::invalid("position_sample_steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt_fs * FS
    }

    pub fn duration(&self) -> f64 {
        self.duration_ps * PS
    }

    pub fn steps(&self) -> usize {
        (self.duration() / self.dt()).round() as usize
    }
}

/// Placement of a device inside the simulation box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    grid: Grid1D,
    offset: usize,
    cells: usize,
    margin: f64,
}

impl Layout {
    /// Centre the device on a grid of `params.grid_points` points. The device
    /// length must be a whole number of cells and the injection zone must
    /// clear the absorbing layers.
    pub fn new(device: &DeviceSpec, params: &SimulationParams) -> Result<Self> {
        device.validate()?;
        params.validate()?;
        let dx = params.grid_spacing_nm * NM;
        let grid = Grid1D::with_spacing(dx, params.grid_points)?;
        let cells_f = device.length() / dx;
        let cells = cells_f.round() as usize;
        if (cells_f - cells as f64).abs() > 1e-6 || cells < 2 {
            return Err(Error::invalid(
                "grid_spacing_nm",
                "device length must be a whole number (at least 2) of grid cells",
            ));
        }
        if cells + 1 > params.grid_points {
            return Err(Error::invalid("grid_points", "device does not fit in the box"));
        }
        let offset = (params.grid_points - cells) / 2;
        let margin = params.absorber_fraction * grid.length();
        let layout = Layout {
            grid,
            offset,
            cells,
            margin,
        };
        let reach = (params.injection_offset_sigmas + 3.0) * params.packet_sigma_nm * NM;
        if layout.device_start() - reach < margin || layout.device_end() + reach > grid.x(grid.n() - 1) - margin {
            return Err(Error::invalid(
                "grid_points",
                "injected packets would overlap the absorbing layers; enlarge the box",
            ));
        }
        Ok(layout)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Grid index of the left contact.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Number of cells spanned by the device.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Box coordinate of the left contact, m.
    pub fn device_start(&self) -> f64 {
        self.grid.x(self.offset)
    }

    /// Box coordinate of the right contact, m.
    pub fn device_end(&self) -> f64 {
        self.grid.x(self.offset + self.cells)
    }

    pub fn absorber_margin(&self) -> f64 {
        self.margin
    }

    /// Region free of absorption, in box coordinates.
    pub fn interior(&self) -> Range<f64> {
        self.margin..self.grid.x(self.grid.n() - 1) - self.margin
    }

    pub fn in_device(&self, x: f64) -> bool {
        x >= self.device_start() && x <= self.device_end()
    }
}

/// Band profile plus bias ramp on every grid point (J): zero in the left
/// lead, `-e V` in the right lead, linear across the device.
pub fn base_potential_values(device: &DeviceSpec, layout: &Layout) -> Vec<f64> {
    let drop = ELEMENTARY_CHARGE * device.applied_bias_v;
    let dx = layout.grid.dx();
    (0..layout.grid.n())
        .map(|i| {
            let d = i as i64 - layout.offset as i64;
            if d < 0 {
                0.0
            } else if d as usize > layout.cells {
                -drop
            } else {
                let frac = d as f64 / layout.cells as f64;
                device.band_offset_at(d as f64 * dx) - drop * frac
            }
        })
        .collect()
}

/// Solve `u[i-1] - 2 u[i] + u[i+1] = rhs[i]` for interior nodes with
/// `u[0] = u[n-1] = 0` (Thomas algorithm).
pub(crate) fn solve_dirichlet(rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut u = vec![0.0; n];
    if n < 3 {
        return u;
    }
    let m = n - 2;
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let (c_prev, d_prev) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let denom = -2.0 - c_prev;
        c[i] = 1.0 / denom;
        d[i] = (rhs[i + 1] - d_prev) / denom;
    }
    for i in (0..m).rev() {
        let next = if i + 1 < m { u[i + 2] } else { 0.0 };
        u[i + 1] = d[i] - c[i] * next;
    }
    u
}

/// Cloud-in-cell weights of a point charge at box coordinate `x` on the
/// device nodes `0..=cells`; empty outside the device.
fn cic_weights(layout: &Layout, x: f64) -> Option<[(usize, f64); 2]> {
    if !layout.in_device(x) {
        return None;
    }
    let s = (x - layout.device_start()) / layout.grid.dx();
    let j = (s.floor() as usize).min(layout.cells - 1);
    let t = s - j as f64;
    Some([(j, 1.0 - t), (j + 1, t)])
}

/// Potential energy (J) on the device nodes generated by one electron at box
/// coordinate `x`, with grounded contacts. `None` outside the device.
pub(crate) fn coulomb_single(device: &DeviceSpec, layout: &Layout, x: f64) -> Option<Vec<f64>> {
    let w = cic_weights(layout, x)?;
    let dx = layout.grid.dx();
    let eps = device.relative_permittivity * VACUUM_PERMITTIVITY;
    let area = device.cross_section_nm2 * NM * NM;
    let scale = -ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * dx / (eps * area);
    let mut rhs = vec![0.0; layout.cells + 1];
    for (node, weight) in w {
        rhs[node] += scale * weight;
    }
    Some(solve_dirichlet(&rhs))
}

/// Coulomb energy (J) on the device nodes from electrons at the given box
/// coordinates.
pub fn coulomb_potential(device: &DeviceSpec, layout: &Layout, positions: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; layout.cells + 1];
    for &x in positions {
        if let Some(u) = coulomb_single(device, layout, x) {
            total.iter_mut().zip(&u).for_each(|(t, v)| *t += v);
        }
    }
    total
}

/// Potential seen by one electron: band profile, bias ramp, Coulomb energy
/// of the electrons at `other_positions` (box coordinates, the electron
/// itself excluded), and the absorbing layers.
pub fn assemble_potential(
    device: &DeviceSpec,
    layout: &Layout,
    other_positions: &[f64],
    absorber_strength_ev: f64,
) -> Result<Potential1D> {
    let mut values = base_potential_values(device, layout);
    let u = coulomb_potential(device, layout, other_positions);
    values[layout.offset..=layout.offset + layout.cells]
        .iter_mut()
        .zip(&u)
        .for_each(|(v, c)| *v += c);
    let absorber: Vec<Complex64> = quartic_absorber(
        &layout.grid,
        layout.margin,
        ev_to_joule(absorber_strength_ev),
    )?;
    Potential1D::with_absorber(layout.grid, values, absorber)
}
