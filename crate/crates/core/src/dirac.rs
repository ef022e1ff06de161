//! Split-step propagation of a 2D graphene bispinor near a Dirac point and
//! the band-resolving collision operator.
//!
//! `H = v_f (sigma_x p_x + sigma_y p_y) + V(r) - i W(r)`. The kinetic factor
//! is applied exactly in momentum space as a 2x2 unitary per wave vector, so
//! the lattice dispersion is exactly `E = s hbar v_f |k|` with no doubled
//! modes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft2_in_place, Bispinor2D, Grid2D};
use crate::scattering::CollisionEvent;
use crate::units::{FERMI_VELOCITY, HBAR};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Energy branch: +1 conduction, -1 valence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct BandIndex(i8);

impl BandIndex {
    pub const CONDUCTION: BandIndex = BandIndex(1);
    pub const VALENCE: BandIndex = BandIndex(-1);

    pub fn new(s: i8) -> Result<Self> {
        match s {
            1 | -1 => Ok(BandIndex(s)),
            _ => Err(Error::invalid("band", format!("{s} is not +1 or -1"))),
        }
    }

    pub fn sign(self) -> i8 {
        self.0
    }

    pub fn flipped(self) -> Self {
        BandIndex(-self.0)
    }
}

impl TryFrom<i8> for BandIndex {
    type Error = Error;
    fn try_from(s: i8) -> Result<Self> {
        BandIndex::new(s)
    }
}

impl From<BandIndex> for i8 {
    fn from(b: BandIndex) -> i8 {
        b.0
    }
}

/// Angle `beta_k` of a wave vector, `exp(i beta) = (kx + i ky) / |k|`.
pub fn wavevector_angle(k: [f64; 2]) -> f64 {
    k[1].atan2(k[0])
}

fn norm2(k: [f64; 2]) -> f64 {
    k[0].hypot(k[1])
}

/// Unit-norm plane-wave eigenspinor `exp(i k r) (1, s exp(i beta_k))^T / sqrt(2)`.
pub fn eigenspinor(k: [f64; 2], band: BandIndex, grid: &Grid2D) -> Result<Bispinor2D> {
    if norm2(k) == 0.0 {
        return Err(Error::domain("eigenspinor undefined at k = 0"));
    }
    let beta = wavevector_angle(k);
    let amp = 1.0 / (2.0 * grid.lengths()[0] * grid.lengths()[1]).sqrt();
    let lower_factor = Complex64::from_polar(band.sign() as f64, beta);
    let upper: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let r = grid.position(i);
            Complex64::from_polar(amp, k[0] * r[0] + k[1] * r[1])
        })
        .collect();
    let lower = upper.iter().map(|u| u * lower_factor).collect();
    Ok(Bispinor2D::from_parts(*grid, upper, lower))
}

/// Gaussian packet with intensity standard deviation `sigma` in each
/// direction, central wave vector `k0`, projected exactly onto `band` in
/// momentum space and normalized to one.
pub fn gaussian_packet(
    grid: &Grid2D,
    center: [f64; 2],
    sigma: f64,
    k0: [f64; 2],
    band: BandIndex,
) -> Result<Bispinor2D> {
    if norm2(k0) == 0.0 {
        return Err(Error::domain("packet needs a non-zero central wave vector"));
    }
    let beta0 = wavevector_angle(k0);
    let lower_factor = Complex64::from_polar(band.sign() as f64, beta0);
    let upper: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let r = grid.position(i);
            let d = [r[0] - center[0], r[1] - center[1]];
            let env = (-(d[0] * d[0] + d[1] * d[1]) / (4.0 * sigma * sigma)).exp();
            Complex64::from_polar(env, k0[0] * d[0] + k0[1] * d[1])
        })
        .collect();
    let lower = upper.iter().map(|u| u * lower_factor).collect();
    project_band(&Bispinor2D::from_parts(*grid, upper, lower), band)?.normalized()
}

/// Per-wave-vector projection onto the given band. The `k = 0` component is
/// split evenly between bands.
pub fn project_band(spinor: &Bispinor2D, band: BandIndex) -> Result<Bispinor2D> {
    let grid = *spinor.grid();
    let (mut u, mut l) = spinor.to_momentum_space();
    let kx = grid.wavenumbers_x();
    let ky = grid.wavenumbers_y();
    let nx = grid.dims()[0];
    let s = band.sign() as f64;
    for (idx, (a, b)) in u.iter_mut().zip(l.iter_mut()).enumerate() {
        let k = [kx[idx % nx], ky[idx / nx]];
        if norm2(k) == 0.0 {
            *a *= 0.5;
            *b *= 0.5;
            continue;
        }
        let e = Complex64::from_polar(1.0, wavevector_angle(k));
        // amplitude along (1, s e^{i beta}) / sqrt(2)
        let c = (*a + s * e.conj() * *b) * 0.5;
        *a = c;
        *b = c * s * e;
    }
    Bispinor2D::from_momentum_space(grid, &u, &l)
}

/// Fractions of spectral weight on the conduction and valence eigenspinors.
pub fn band_weights(spinor: &Bispinor2D) -> Result<(f64, f64)> {
    let grid = spinor.grid();
    let (u, l) = spinor.to_momentum_space();
    let kx = grid.wavenumbers_x();
    let ky = grid.wavenumbers_y();
    let nx = grid.dims()[0];
    let (mut plus, mut minus) = (0.0, 0.0);
    for (idx, (a, b)) in u.iter().zip(&l).enumerate() {
        let k = [kx[idx % nx], ky[idx / nx]];
        if norm2(k) == 0.0 {
            let w = 0.5 * (a.norm_sqr() + b.norm_sqr());
            plus += w;
            minus += w;
            continue;
        }
        let e = Complex64::from_polar(1.0, -wavevector_angle(k));
        plus += 0.5 * (a + e * b).norm_sqr();
        minus += 0.5 * (a - e * b).norm_sqr();
    }
    let total = plus + minus;
    if total == 0.0 {
        return Err(Error::domain("band weights of a zero-norm bispinor"));
    }
    Ok((plus / total, minus / total))
}

/// Scalar potential (J) and absorbing strength `W >= 0` (J) on a 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential2D {
    grid: Grid2D,
    values: Vec<f64>,
    absorber: Vec<f64>,
}

impl Potential2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} potential values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("potential contains non-finite values"));
        }
        Ok(Potential2D {
            grid,
            absorber: vec![0.0; grid.len()],
            values,
        })
    }

    pub fn zero(grid: Grid2D) -> Self {
        Potential2D {
            grid,
            values: vec![0.0; grid.len()],
            absorber: vec![0.0; grid.len()],
        }
    }

    /// Potential `height` (J) for `x0 <= x < x1`, uniform in y.
    pub fn barrier_x(grid: Grid2D, x0: f64, x1: f64, height: f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.position(i)[0];
                if (x0..x1).contains(&x) {
                    height
                } else {
                    0.0
                }
            })
            .collect();
        Potential2D {
            grid,
            values,
            absorber: vec![0.0; grid.len()],
        }
    }

    /// Quartic absorbing layers of depth `margin` at both x edges.
    pub fn absorbing_x(mut self, margin: f64, strength: f64) -> Result<Self> {
        let lx = self.grid.lengths()[0];
        if !(margin > 0.0 && margin < 0.5 * lx) {
            return Err(Error::invalid("margin", "must lie in (0, Lx/2)"));
        }
        if !(strength >= 0.0) {
            return Err(Error::invalid("strength", "must be non-negative"));
        }
        let last = lx - self.grid.spacings()[0];
        for (i, w) in self.absorber.iter_mut().enumerate() {
            let x = self.grid.position(i)[0];
            let depth = (margin - x).max(x - (last - margin)).max(0.0) / margin;
            *w = strength * depth.powi(4);
        }
        Ok(self)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn absorber(&self) -> &[f64] {
        &self.absorber
    }

    pub fn has_absorber(&self) -> bool {
        self.absorber.iter().any(|&w| w != 0.0)
    }

    pub fn half_range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        0.5 * (hi - lo)
    }
}

/// Per-k 2x2 kinetic propagator `exp(-i v_f sigma.k dt)`, stored as
/// `(cos, -i sin * exp(-i beta), -i sin * exp(i beta))`.
#[derive(Debug, Clone)]
struct KineticBlock {
    diag: Vec<f64>,
    upper_right: Vec<Complex64>,
    lower_left: Vec<Complex64>,
}

impl KineticBlock {
    fn new(grid: &Grid2D, dt: f64, shift: [f64; 2]) -> Self {
        let kx = grid.wavenumbers_x();
        let ky = grid.wavenumbers_y();
        let nx = grid.dims()[0];
        let mut diag = Vec::with_capacity(grid.len());
        let mut upper_right = Vec::with_capacity(grid.len());
        let mut lower_left = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let mut k = [kx[idx % nx], ky[idx / nx]];
            if shift != [0.0, 0.0] {
                k = grid.wrap_wavenumber([k[0] + shift[0] / HBAR, k[1] + shift[1] / HBAR]);
            }
            let kabs = norm2(k);
            let theta = FERMI_VELOCITY * kabs * dt;
            let (s, c) = theta.sin_cos();
            let e = if kabs == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(k[0] / kabs, k[1] / kabs)
            };
            diag.push(c);
            upper_right.push(-I * s * e.conj());
            lower_left.push(-I * s * e);
        }
        KineticBlock {
            diag,
            upper_right,
            lower_left,
        }
    }
}

/// Reusable Dirac split-step propagator for a fixed grid and time step.
#[derive(Debug, Clone)]
pub struct DiracPropagator {
    grid: Grid2D,
    dt: f64,
    kinetic: KineticBlock,
}

impl DiracPropagator {
    pub fn new(grid: Grid2D, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::invalid("dt", "must be finite and non-zero"));
        }
        Ok(DiracPropagator {
            grid,
            dt,
            kinetic: KineticBlock::new(&grid, dt, [0.0, 0.0]),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, spinor: &Bispinor2D, pot: &Potential2D) -> Result<Bispinor2D> {
        self.step_with(spinor, pot, &self.kinetic)
    }

    /// Step with kinetic operator `v_f sigma.(p + shift)`; `shift` in kg m/s.
    pub fn step_shifted(
        &self,
        spinor: &Bispinor2D,
        pot: &Potential2D,
        shift: [f64; 2],
    ) -> Result<Bispinor2D> {
        let block = KineticBlock::new(&self.grid, self.dt, shift);
        self.step_with(spinor, pot, &block)
    }

    fn step_with(
        &self,
        spinor: &Bispinor2D,
        pot: &Potential2D,
        kinetic: &KineticBlock,
    ) -> Result<Bispinor2D> {
        if spinor.grid() != &self.grid || pot.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "spinor, potential and propagator grids differ".into(),
            ));
        }
        if self.dt < 0.0 && pot.has_absorber() {
            return Err(Error::invalid(
                "dt",
                "backward propagation through an absorber is unstable",
            ));
        }
        let half: Vec<Complex64> = pot
            .values
            .iter()
            .zip(&pot.absorber)
            .map(|(&v, &w)| {
                let h = 0.5 * self.dt / HBAR;
                Complex64::from_polar((-w * h).exp(), -v * h)
            })
            .collect();
        let dims = self.grid.dims();
        let inv_n = 1.0 / self.grid.len() as f64;
        let mut out = spinor.clone();
        let (u, l) = out.components_mut();
        for (a, h) in u.iter_mut().zip(&half) {
            *a *= h;
        }
        for (b, h) in l.iter_mut().zip(&half) {
            *b *= h;
        }
        fft2_in_place(u, dims, FftDirection::Forward);
        fft2_in_place(l, dims, FftDirection::Forward);
        for idx in 0..u.len() {
            let (a, b) = (u[idx], l[idx]);
            let c = kinetic.diag[idx];
            u[idx] = (a * c + kinetic.upper_right[idx] * b) * inv_n;
            l[idx] = (kinetic.lower_left[idx] * a + b * c) * inv_n;
        }
        fft2_in_place(u, dims, FftDirection::Inverse);
        fft2_in_place(l, dims, FftDirection::Inverse);
        for (a, h) in u.iter_mut().zip(&half) {
            *a *= h;
        }
        for (b, h) in l.iter_mut().zip(&half) {
            *b *= h;
        }
        Ok(out)
    }
}

pub fn step_dirac(spinor: &Bispinor2D, pot: &Potential2D, dt: f64) -> Result<Bispinor2D> {
    DiracPropagator::new(*spinor.grid(), dt)?.step(spinor, pot)
}

/// Collision specification for a Dirac electron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracCollision {
    /// Momentum transfer (1/m).
    pub q: [f64; 2],
    /// Central wave vector before the collision (1/m).
    pub k0: [f64; 2],
    /// Central wave vector after the collision (1/m).
    pub kf: [f64; 2],
    /// 1 when the band changes.
    pub band_flip_m: u8,
}

impl DiracCollision {
    /// Collision taking the central wave vector from `k0` to `kf`.
    pub fn between(k0: [f64; 2], kf: [f64; 2], band_flip: bool) -> Self {
        DiracCollision {
            q: [kf[0] - k0[0], kf[1] - k0[1]],
            k0,
            kf,
            band_flip_m: u8::from(band_flip),
        }
    }

    pub fn from_event(k0: [f64; 2], event: &CollisionEvent) -> Self {
        DiracCollision {
            q: event.q,
            k0,
            kf: [k0[0] + event.q[0], k0[1] + event.q[1]],
            band_flip_m: event.band_flip,
        }
    }

    /// `alpha = m pi + beta_kf - beta_k0`.
    pub fn alpha(&self) -> Result<f64> {
        if norm2(self.k0) == 0.0 || norm2(self.kf) == 0.0 {
            return Err(Error::domain("collision angle undefined for a zero wave vector"));
        }
        Ok(self.band_flip_m as f64 * PI + wavevector_angle(self.kf) - wavevector_angle(self.k0))
    }
}

/// Apply a collision: multiply both components by `exp(i q r)` (q rounded to
/// the grid) and the lower component by `exp(i alpha)`.
pub fn apply_dirac_collision(spinor: &Bispinor2D, c: &DiracCollision) -> Result<Bispinor2D> {
    let alpha = c.alpha()?;
    let grid = *spinor.grid();
    let q = grid.representable(c.q);
    let lower_phase = Complex64::from_polar(1.0, alpha);
    let mut out = spinor.clone();
    let (u, l) = out.components_mut();
    for idx in 0..u.len() {
        let r = grid.position(idx);
        let phase = Complex64::from_polar(1.0, q[0] * r[0] + q[1] * r[1]);
        u[idx] *= phase;
        l[idx] *= phase * lower_phase;
    }
    Ok(out)
}

/// Kick-commutation check: stepping `exp(i q r) psi` with the plain
/// Hamiltonian versus `exp(i q r)` times stepping `psi` with the kinetic
/// operator shifted by `hbar q`. Returns the max pointwise deviation.
pub fn verify_dirac_kick_identity(
    spinor: &Bispinor2D,
    pot: &Potential2D,
    dt: f64,
    q: [f64; 2],
) -> Result<f64> {
    let grid = *spinor.grid();
    let q = grid.representable(q);
    let prop = DiracPropagator::new(grid, dt)?;
    let kick = |s: &Bispinor2D| {
        let mut out = s.clone();
        let (u, l) = out.components_mut();
        for idx in 0..u.len() {
            let r = grid.position(idx);
            let phase = Complex64::from_polar(1.0, q[0] * r[0] + q[1] * r[1]);
            u[idx] *= phase;
            l[idx] *= phase;
        }
        out
    };
    let lhs = prop.step(&kick(spinor), pot)?;
    let rhs = kick(&prop.step_shifted(spinor, pot, [HBAR * q[0], HBAR * q[1]])?);
    Ok(lhs
        .upper()
        .iter()
        .zip(rhs.upper())
        .chain(lhs.lower().iter().zip(rhs.lower()))
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// Fraction of the bispinor's norm at `x > x_boundary`.
pub fn transmission_fraction_x(spinor: &Bispinor2D, x_boundary: f64) -> Result<f64> {
    spinor.fraction_beyond_x(x_boundary)
}
