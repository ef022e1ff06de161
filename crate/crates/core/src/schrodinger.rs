//! Split-step propagation of a 1D parabolic-band conditional wave function.
//!
//! The Hamiltonian is `(p + lambda)^2 / 2m + V(x) - i W(x)`, where `lambda`
//! is the accumulated collision momentum (only when kicks are carried by the
//! kinetic operator, see [`KickRepresentation`]) and `W >= 0` is an absorbing
//! layer at the box edges. A step is Strang-split: half potential, exact
//! spectral kinetic step, half potential.

use num_complex::Complex64;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::field::{cell_fraction_beyond, fft_in_place, ComplexField1D, Grid1D};
use crate::scattering::CollisionEvent;
use crate::units::HBAR;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Real potential energy plus an absorbing (negative-imaginary) layer, both
/// in joules.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential1D {
    grid: Grid1D,
    values: Vec<f64>,
    absorber: Vec<Complex64>,
}

impl Potential1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        let absorber = vec![Complex64::default(); grid.n()];
        Self::with_absorber(grid, values, absorber)
    }

    pub fn flat(grid: Grid1D, value: f64) -> Self {
        Potential1D {
            grid,
            values: vec![value; grid.n()],
            absorber: vec![Complex64::default(); grid.n()],
        }
    }

    pub fn with_absorber(grid: Grid1D, values: Vec<f64>, absorber: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() || absorber.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "potential arrays of length {}/{} for a grid of {} points",
                values.len(),
                absorber.len(),
                grid.n()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("potential contains non-finite values"));
        }
        if absorber.iter().any(|a| !(a.im <= 0.0) || a.re != 0.0) {
            return Err(Error::invalid(
                "absorber",
                "must be purely imaginary with non-positive imaginary part",
            ));
        }
        Ok(Potential1D {
            grid,
            values,
            absorber,
        })
    }

    /// Add a quartic-ramp absorbing layer of depth `margin` (m) at both box
    /// edges, peaking at `-i strength` (J) at the outermost grid points.
    pub fn absorbing(mut self, margin: f64, strength: f64) -> Result<Self> {
        self.absorber = quartic_absorber(&self.grid, margin, strength)?;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn absorber(&self) -> &[Complex64] {
        &self.absorber
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn has_absorber(&self) -> bool {
        self.absorber.iter().any(|a| a.im != 0.0)
    }

    /// Half-width of the real potential's range, J.
    pub fn half_range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        0.5 * (hi - lo)
    }
}

pub(crate) fn quartic_absorber(grid: &Grid1D, margin: f64, strength: f64) -> Result<Vec<Complex64>> {
    if !(margin > 0.0 && margin < 0.5 * grid.length()) {
        return Err(Error::invalid("margin", "must lie in (0, length/2)"));
    }
    if !(strength >= 0.0) {
        return Err(Error::invalid("strength", "must be non-negative"));
    }
    let last = grid.x(grid.n() - 1);
    Ok((0..grid.n())
        .map(|i| {
            let x = grid.x(i);
            let depth = (margin - x).max(x - (last - margin)).max(0.0) / margin;
            Complex64::new(0.0, -strength * depth.powi(4))
        })
        .collect())
}

/// Time step that keeps the per-step potential phase below 0.5 rad and the
/// kinetic phase of the relevant spectral content (energies up to
/// `max_kinetic_energy`, J) below 0.5 rad.
pub fn suggest_dt(pot: &Potential1D, max_kinetic_energy: f64) -> f64 {
    0.5 * HBAR / pot.half_range().max(max_kinetic_energy).max(f64::MIN_POSITIVE)
}

/// How collision momentum enters the propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KickRepresentation {
    /// Kicks multiply the field by `exp(i q x)` at the collision instant.
    #[default]
    Phase,
    /// Kicks accumulate into the kinetic operator `(p + lambda)^2 / 2m`; the
    /// field is then an envelope and the physical field is
    /// `exp(i lambda x / hbar)` times it.
    Kinetic,
}

#[derive(Debug, Clone, PartialEq)]
struct PendingKick {
    event: CollisionEvent,
    remaining_q: f64,
    remaining_kicks: u32,
}

/// Collision bookkeeping for one conditional wave function.
#[derive(Debug, Clone, PartialEq)]
pub struct KickState {
    lambda_accum: f64,
    pending: Option<PendingKick>,
    sub_kicks: u32,
    representation: KickRepresentation,
}

impl Default for KickState {
    fn default() -> Self {
        KickState::new(1, KickRepresentation::Phase)
    }
}

impl KickState {
    /// `sub_kicks` spreads each collision over that many consecutive steps.
    pub fn new(sub_kicks: u32, representation: KickRepresentation) -> Self {
        KickState {
            lambda_accum: 0.0,
            pending: None,
            sub_kicks: sub_kicks.max(1),
            representation,
        }
    }

    /// Kinetic-representation state carrying a fixed momentum `lambda` (kg m/s).
    pub fn shifted(lambda: f64) -> Self {
        KickState {
            lambda_accum: lambda,
            ..KickState::new(1, KickRepresentation::Kinetic)
        }
    }

    pub fn lambda_accum(&self) -> f64 {
        self.lambda_accum
    }

    pub fn pending(&self) -> Option<&CollisionEvent> {
        self.pending.as_ref().map(|p| &p.event)
    }

    pub fn representation(&self) -> KickRepresentation {
        self.representation
    }

    /// Momentum carried by the kinetic operator.
    pub fn kinetic_shift(&self) -> f64 {
        match self.representation {
            KickRepresentation::Phase => 0.0,
            KickRepresentation::Kinetic => self.lambda_accum,
        }
    }

    fn kick(&mut self, field: &ComplexField1D, q: f64) -> ComplexField1D {
        let q = field.grid().representable(q);
        self.lambda_accum += HBAR * q;
        match self.representation {
            KickRepresentation::Phase => apply_kick(field, q),
            KickRepresentation::Kinetic => field.clone(),
        }
    }

    /// Start a collision: the first sub-kick is applied immediately, the rest
    /// by subsequent [`KickState::advance`] calls. A collision still in
    /// progress is completed first.
    pub fn collide(&mut self, field: &ComplexField1D, event: CollisionEvent) -> ComplexField1D {
        let mut field = self.flush(field);
        let q_total = field.grid().representable(event.q[0]);
        self.pending = Some(PendingKick {
            event,
            remaining_q: q_total,
            remaining_kicks: self.sub_kicks,
        });
        field = self.advance(&field);
        field
    }

    /// Apply the next sub-kick of a collision in progress, if any.
    pub fn advance(&mut self, field: &ComplexField1D) -> ComplexField1D {
        let Some(mut p) = self.pending.take() else {
            return field.clone();
        };
        let q = if p.remaining_kicks <= 1 {
            p.remaining_q
        } else {
            field
                .grid()
                .representable(p.remaining_q / p.remaining_kicks as f64)
        };
        let out = self.kick(field, q);
        p.remaining_q -= field.grid().representable(q);
        p.remaining_kicks -= 1;
        if p.remaining_kicks > 0 {
            self.pending = Some(p);
        }
        out
    }

    fn flush(&mut self, field: &ComplexField1D) -> ComplexField1D {
        let mut f = field.clone();
        while self.pending.is_some() {
            f = self.advance(&f);
        }
        f
    }

    /// The physical field for a field evolved in this representation.
    pub fn physical(&self, field: &ComplexField1D) -> ComplexField1D {
        match self.representation {
            KickRepresentation::Phase => field.clone(),
            KickRepresentation::Kinetic => apply_kick(field, self.lambda_accum / HBAR),
        }
    }
}

/// Reusable split-step propagator for a fixed grid, mass and time step.
#[derive(Debug, Clone)]
pub struct Propagator1D {
    grid: Grid1D,
    mass: f64,
    dt: f64,
    kinetic: Vec<Complex64>,
}

impl Propagator1D {
    /// `dt` may be negative for backward propagation without absorbers.
    pub fn new(grid: Grid1D, mass: f64, dt: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::invalid("dt", "must be finite and non-zero"));
        }
        let kinetic = kinetic_factors(&grid, mass, dt, 0.0);
        Ok(Propagator1D {
            grid,
            mass,
            dt,
            kinetic,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn step(
        &self,
        field: &ComplexField1D,
        pot: &Potential1D,
        kick: &KickState,
    ) -> Result<ComplexField1D> {
        if pot.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "potential and propagator grids differ".into(),
            ));
        }
        if self.dt < 0.0 && pot.has_absorber() {
            return Err(Error::invalid(
                "dt",
                "backward propagation through an absorber is unstable",
            ));
        }
        self.step_with_factors(field, &self.half_factors(pot), kick)
    }

    /// Half-step potential factors `exp(-i (V - iW) dt / 2 hbar)`.
    pub fn half_factors(&self, pot: &Potential1D) -> Vec<Complex64> {
        pot.values
            .iter()
            .zip(&pot.absorber)
            .map(|(&v, a)| (-I * (v + a) * (0.5 * self.dt / HBAR)).exp())
            .collect()
    }

    /// Strang step with precomputed half-step potential factors.
    pub fn step_with_factors(
        &self,
        field: &ComplexField1D,
        half: &[Complex64],
        kick: &KickState,
    ) -> Result<ComplexField1D> {
        if field.grid() != &self.grid || half.len() != self.grid.n() {
            return Err(Error::GridMismatch(
                "field, potential and propagator grids differ".into(),
            ));
        }
        let shift = kick.kinetic_shift();
        let shifted;
        let kinetic = if shift == 0.0 {
            &self.kinetic
        } else {
            shifted = kinetic_factors(&self.grid, self.mass, self.dt, shift);
            &shifted
        };

        let mut out = field.clone();
        let buf = out.values_mut();
        buf.iter_mut().zip(half).for_each(|(p, h)| *p *= h);
        fft_in_place(buf, FftDirection::Forward);
        let inv_n = 1.0 / self.grid.n() as f64;
        buf.iter_mut()
            .zip(kinetic)
            .for_each(|(p, k)| *p *= k * inv_n);
        fft_in_place(buf, FftDirection::Inverse);
        buf.iter_mut().zip(half).for_each(|(p, h)| *p *= h);
        Ok(out)
    }
}

/// `exp(-i hbar k_eff^2 dt / 2m)` with `k_eff = k + shift/hbar` folded back
/// into the grid's Brillouin zone.
fn kinetic_factors(grid: &Grid1D, mass: f64, dt: f64, shift: f64) -> Vec<Complex64> {
    grid.wavenumbers()
        .into_iter()
        .map(|k| {
            let k = if shift == 0.0 {
                k
            } else {
                grid.wrap_wavenumber(k + shift / HBAR)
            };
            Complex64::from_polar(1.0, -HBAR * k * k * dt / (2.0 * mass))
        })
        .collect()
}

/// One Strang step of length `dt`.
pub fn step(
    field: &ComplexField1D,
    pot: &Potential1D,
    kick: &KickState,
    mass: f64,
    dt: f64,
) -> Result<ComplexField1D> {
    Propagator1D::new(*field.grid(), mass, dt)?.step(field, pot, kick)
}

/// Instantaneous collision: multiply by `exp(i q x)` with `q` rounded to the
/// nearest grid-representable wavenumber.
pub fn apply_kick(field: &ComplexField1D, q: f64) -> ComplexField1D {
    let grid = *field.grid();
    let q = grid.representable(q);
    if q == 0.0 {
        return field.clone();
    }
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, q * grid.x(i)))
        .collect();
    ComplexField1D::from_parts(grid, values)
}

/// Max pointwise deviation between kicking then propagating with the plain
/// Hamiltonian, and propagating with the momentum-shifted Hamiltonian then
/// kicking.
pub fn verify_kick_identity(
    field: &ComplexField1D,
    pot: &Potential1D,
    mass: f64,
    dt: f64,
    q: f64,
) -> Result<f64> {
    let q = field.grid().representable(q);
    let prop = Propagator1D::new(*field.grid(), mass, dt)?;
    let lhs = prop.step(&apply_kick(field, q), pot, &KickState::default())?;
    let rhs = apply_kick(&prop.step(field, pot, &KickState::shifted(HBAR * q))?, q);
    Ok(lhs
        .values()
        .iter()
        .zip(rhs.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// Fraction of the field's norm lying beyond `x_boundary`.
pub fn transmission_fraction(field: &ComplexField1D, x_boundary: f64) -> Result<f64> {
    let grid = field.grid();
    if !grid.contains(x_boundary) {
        return Err(Error::invalid("x_boundary", "outside the grid"));
    }
    let total: f64 = field.values().iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return Err(Error::domain("transmission of a zero-norm field"));
    }
    let beyond: f64 = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.norm_sqr() * cell_fraction_beyond(grid.x(i), grid.dx(), x_boundary))
        .sum();
    Ok(beyond / total)
}

/// Kinetic energy expectation `hbar^2 <k^2> / 2m` computed spectrally.
pub fn kinetic_energy(field: &ComplexField1D, mass: f64) -> Result<f64> {
    let spec = field.to_momentum_space();
    let (num, den) = spec
        .iter()
        .zip(field.grid().wavenumbers())
        .fold((0.0, 0.0), |(n, d), (f, k)| (n + k * k * f.norm_sqr(), d + f.norm_sqr()));
    if den == 0.0 {
        return Err(Error::domain("kinetic energy of a zero-norm field"));
    }
    Ok(HBAR * HBAR * num / den / (2.0 * mass))
}
