//! Uniform periodic grids and the complex fields that live on them.
//!
//! Grid points sit at `x_i = i * dx` for `i in 0..n`, so a grid covers
//! `[0, length)`. Spectral arrays are kept in FFT order; the matching
//! wavenumbers come from [`Grid1D::wavenumbers`] and span `[-pi/dx, pi/dx)`.
//!
//! The continuous-transform normalization is used throughout:
//! `f(k) = dx / sqrt(2 pi) * sum_i psi(x_i) exp(-i k x_i)`, which makes
//! `sum |psi|^2 dx == sum |f|^2 dk`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::units::HBAR;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

type PlanKey = (usize, bool);
type PlanCache = (FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>);

fn fft_plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = plans.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((n, direction == FftDirection::Forward))
        .or_insert_with(|| planner.plan_fft(n, direction))
        .clone()
}

/// Unnormalized in-place FFT of a contiguous buffer.
pub(crate) fn fft_in_place(buf: &mut [Complex64], direction: FftDirection) {
    fft_plan(buf.len(), direction).process(buf);
}

/// Unnormalized in-place 2D FFT of a row-major `ny x nx` buffer (x fastest).
pub(crate) fn fft2_in_place(buf: &mut [Complex64], dims: [usize; 2], direction: FftDirection) {
    let [nx, ny] = dims;
    let row = fft_plan(nx, direction);
    row.process(buf);
    let col = fft_plan(ny, direction);
    let mut scratch = vec![Complex64::default(); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            scratch[iy] = buf[iy * nx + ix];
        }
        col.process(&mut scratch);
        for iy in 0..ny {
            buf[iy * nx + ix] = scratch[iy];
        }
    }
}

fn check_dim(name: &'static str, n: usize) -> Result<()> {
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::invalid(
            name,
            format!("{n} points; need a power of two >= 64"),
        ));
    }
    Ok(())
}

fn check_length(name: &'static str, length: f64) -> Result<()> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::invalid(name, format!("{length} must be positive")));
    }
    Ok(())
}

/// FFT-ordered wavenumbers for `n` points spaced by `dx`.
fn fft_wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            let j = j as i64;
            let m = if j < n as i64 / 2 { j } else { j - n as i64 };
            m as f64 * dk
        })
        .collect()
}

/// Map `k` into the grid's Brillouin zone `[-pi/dx, pi/dx)`.
fn wrap_into_zone(k: f64, dx: f64) -> f64 {
    let span = 2.0 * PI / dx;
    let half = PI / dx;
    let shifted = (k + half) / span;
    let nearest = shifted.round();
    let turns = if (shifted - nearest).abs() < 1e-9 { nearest } else { shifted.floor() };
    k - span * turns
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    length: f64,
    n: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(length_m: f64, n: usize) -> Result<Self> {
        check_length("length_m", length_m)?;
        check_dim("n", n)?;
        Ok(Grid1D {
            length: length_m,
            n,
            dx: length_m / n as f64,
        })
    }

    /// Grid of `n` points with spacing `dx`.
    pub fn with_spacing(dx: f64, n: usize) -> Result<Self> {
        check_length("dx", dx)?;
        Self::new(dx * n as f64, n)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        fft_wavenumbers(self.n, self.dx)
    }

    /// Round `q` to the nearest integer multiple of `2 pi / length`, so that
    /// `exp(i q x)` is periodic on the grid.
    pub fn representable(&self, q: f64) -> f64 {
        (q / self.dk()).round() * self.dk()
    }

    pub fn wrap_wavenumber(&self, k: f64) -> f64 {
        wrap_into_zone(k, self.dx)
    }

    pub fn contains(&self, x: f64) -> bool {
        (0.0..self.length).contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    lengths: [f64; 2],
    dims: [usize; 2],
    spacings: [f64; 2],
}

impl Grid2D {
    pub fn new(lengths: [f64; 2], dims: [usize; 2]) -> Result<Self> {
        check_length("lengths[0]", lengths[0])?;
        check_length("lengths[1]", lengths[1])?;
        check_dim("dims[0]", dims[0])?;
        check_dim("dims[1]", dims[1])?;
        Ok(Grid2D {
            lengths,
            dims,
            spacings: [lengths[0] / dims[0] as f64, lengths[1] / dims[1] as f64],
        })
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn spacings(&self) -> [f64; 2] {
        self.spacings
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.spacings[0] * self.spacings[1]
    }

    pub fn dk(&self) -> [f64; 2] {
        [2.0 * PI / self.lengths[0], 2.0 * PI / self.lengths[1]]
    }

    /// Row-major index, x fastest.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.dims[0] + ix
    }

    pub fn position(&self, index: usize) -> [f64; 2] {
        let ix = index % self.dims[0];
        let iy = index / self.dims[0];
        [ix as f64 * self.spacings[0], iy as f64 * self.spacings[1]]
    }

    pub fn wavenumbers_x(&self) -> Vec<f64> {
        fft_wavenumbers(self.dims[0], self.spacings[0])
    }

    pub fn wavenumbers_y(&self) -> Vec<f64> {
        fft_wavenumbers(self.dims[1], self.spacings[1])
    }

    pub fn representable(&self, q: [f64; 2]) -> [f64; 2] {
        let dk = self.dk();
        [(q[0] / dk[0]).round() * dk[0], (q[1] / dk[1]).round() * dk[1]]
    }

    pub fn wrap_wavenumber(&self, k: [f64; 2]) -> [f64; 2] {
        [
            wrap_into_zone(k[0], self.spacings[0]),
            wrap_into_zone(k[1], self.spacings[1]),
        ]
    }
}

/// A scalar complex field sampled on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField1D {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl ComplexField1D {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::domain("field contains non-finite values"));
        }
        Ok(ComplexField1D { grid, values })
    }

    pub(crate) fn from_parts(grid: Grid1D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        ComplexField1D { grid, values }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        ComplexField1D {
            grid,
            values: vec![Complex64::default(); grid.n()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n()).map(|i| f(grid.x(i))).collect();
        ComplexField1D { grid, values }
    }

    pub fn plane_wave(grid: Grid1D, amplitude: Complex64, k: f64) -> Self {
        Self::from_fn(grid, |x| amplitude * (I * k * x).exp())
    }

    /// Unit-norm Gaussian packet whose intensity `|psi|^2` has standard
    /// deviation `sigma`, centred at `center` with carrier wavenumber `k0`.
    pub fn gaussian(grid: Grid1D, center: f64, sigma: f64, k0: f64) -> Self {
        let f = Self::from_fn(grid, |x| {
            let d = x - center;
            Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), k0 * d)
        });
        let norm = f.l2_norm();
        f.scaled(Complex64::new(1.0 / norm, 0.0))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        ComplexField1D {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(Error::domain("cannot normalize a zero-norm field"));
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `integral |psi|^2 dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn to_momentum_space(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        fft_in_place(&mut buf, FftDirection::Forward);
        let scale = self.grid.dx() / (2.0 * PI).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    pub fn from_momentum_space(grid: Grid1D, spectrum: &[Complex64]) -> Result<Self> {
        if spectrum.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} spectral values for a grid of {} points",
                spectrum.len(),
                grid.n()
            )));
        }
        let mut buf = spectrum.to_vec();
        fft_in_place(&mut buf, FftDirection::Inverse);
        let scale = grid.dk() / (2.0 * PI).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(ComplexField1D { grid, values: buf })
    }

    /// Spectral first derivative with the Nyquist mode dropped. Purely real
    /// (imaginary) fields get purely real (imaginary) derivatives.
    pub fn derivative(&self) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut buf = self.values.clone();
        fft_in_place(&mut buf, FftDirection::Forward);
        for (v, k) in buf.iter_mut().zip(self.grid.wavenumbers()) {
            *v *= I * k;
        }
        buf[n / 2] = Complex64::default();
        fft_in_place(&mut buf, FftDirection::Inverse);
        let inv = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= inv);
        if self.values.iter().all(|v| v.im == 0.0) {
            buf.iter_mut().for_each(|v| v.im = 0.0);
        } else if self.values.iter().all(|v| v.re == 0.0) {
            buf.iter_mut().for_each(|v| v.re = 0.0);
        }
        buf
    }

    /// `sum hbar k |f(k)|^2 / sum |f(k)|^2`, in kg m/s.
    pub fn expectation_momentum(&self) -> Result<f64> {
        let spectrum = self.to_momentum_space();
        let (num, den) = spectrum
            .iter()
            .zip(self.grid.wavenumbers())
            .fold((0.0, 0.0), |(num, den), (f, k)| {
                let w = f.norm_sqr();
                (num + k * w, den + w)
            });
        if den == 0.0 {
            return Err(Error::domain("momentum expectation of a zero-norm field"));
        }
        Ok(HBAR * num / den)
    }

    /// Probability current `(hbar / m) Im(psi* dpsi/dx)` at every grid point.
    pub fn current_density(&self, mass: f64) -> Result<Vec<f64>> {
        if !(mass > 0.0) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        let d = self.derivative();
        Ok(self
            .values
            .iter()
            .zip(&d)
            .map(|(p, dp)| HBAR / mass * (p.conj() * dp).im)
            .collect())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

/// Two-component field on a [`Grid2D`]; components stored row-major, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Bispinor2D {
    grid: Grid2D,
    upper: Vec<Complex64>,
    lower: Vec<Complex64>,
}

impl Bispinor2D {
    pub fn new(grid: Grid2D, upper: Vec<Complex64>, lower: Vec<Complex64>) -> Result<Self> {
        if upper.len() != grid.len() || lower.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "components of length {}/{} for a grid of {} points",
                upper.len(),
                lower.len(),
                grid.len()
            )));
        }
        if upper
            .iter()
            .chain(&lower)
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::domain("bispinor contains non-finite values"));
        }
        Ok(Bispinor2D { grid, upper, lower })
    }

    pub(crate) fn from_parts(grid: Grid2D, upper: Vec<Complex64>, lower: Vec<Complex64>) -> Self {
        debug_assert_eq!(upper.len(), grid.len());
        debug_assert_eq!(lower.len(), grid.len());
        Bispinor2D { grid, upper, lower }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Bispinor2D {
            grid,
            upper: vec![Complex64::default(); grid.len()],
            lower: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn upper(&self) -> &[Complex64] {
        &self.upper
    }

    pub fn lower(&self) -> &[Complex64] {
        &self.lower
    }

    pub fn density(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u.norm_sqr() + l.norm_sqr())
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.density().iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Bispinor2D {
            grid: self.grid,
            upper: self.upper.iter().map(|v| v * c).collect(),
            lower: self.lower.iter().map(|v| v * c).collect(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(Error::domain("cannot normalize a zero-norm bispinor"));
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    /// Both components in momentum space, same normalization convention as
    /// the 1D transform (`dx dy / 2 pi`).
    pub fn to_momentum_space(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let scale = self.grid.cell_area() / (2.0 * PI);
        let transform = |c: &[Complex64]| {
            let mut buf = c.to_vec();
            fft2_in_place(&mut buf, self.grid.dims(), FftDirection::Forward);
            buf.iter_mut().for_each(|v| *v *= scale);
            buf
        };
        (transform(&self.upper), transform(&self.lower))
    }

    pub fn from_momentum_space(
        grid: Grid2D,
        upper: &[Complex64],
        lower: &[Complex64],
    ) -> Result<Self> {
        if upper.len() != grid.len() || lower.len() != grid.len() {
            return Err(Error::GridMismatch(
                "spectral components do not match the grid".into(),
            ));
        }
        let dk = grid.dk();
        let scale = dk[0] * dk[1] / (2.0 * PI);
        let transform = |c: &[Complex64]| {
            let mut buf = c.to_vec();
            fft2_in_place(&mut buf, grid.dims(), FftDirection::Inverse);
            buf.iter_mut().for_each(|v| *v *= scale);
            buf
        };
        Ok(Bispinor2D {
            grid,
            upper: transform(upper),
            lower: transform(lower),
        })
    }

    /// Intensity-weighted centre `integral r |psi|^2 / integral |psi|^2`.
    pub fn centroid(&self) -> Result<[f64; 2]> {
        let density = self.density();
        let total: f64 = density.iter().sum();
        if total == 0.0 {
            return Err(Error::domain("centroid of a zero-norm bispinor"));
        }
        let mut c = [0.0; 2];
        for (i, w) in density.iter().enumerate() {
            let r = self.grid.position(i);
            c[0] += r[0] * w;
            c[1] += r[1] * w;
        }
        Ok([c[0] / total, c[1] / total])
    }

    /// Spectral mean wave vector `<k>` (1/m).
    pub fn mean_wavevector(&self) -> Result<[f64; 2]> {
        let (u, l) = self.to_momentum_space();
        let kx = self.grid.wavenumbers_x();
        let ky = self.grid.wavenumbers_y();
        let nx = self.grid.dims()[0];
        let mut acc = [0.0; 3];
        for (idx, (a, b)) in u.iter().zip(&l).enumerate() {
            let w = a.norm_sqr() + b.norm_sqr();
            acc[0] += kx[idx % nx] * w;
            acc[1] += ky[idx / nx] * w;
            acc[2] += w;
        }
        if acc[2] == 0.0 {
            return Err(Error::domain("wave vector of a zero-norm bispinor"));
        }
        Ok([acc[0] / acc[2], acc[1] / acc[2]])
    }

    /// Fraction of `|psi|^2` with `x > x_boundary`, relative to the full norm.
    pub fn fraction_beyond_x(&self, x_boundary: f64) -> Result<f64> {
        let density = self.density();
        let total: f64 = density.iter().sum();
        if total == 0.0 {
            return Err(Error::domain("transmission of a zero-norm bispinor"));
        }
        let nx = self.grid.dims()[0];
        let dx = self.grid.spacings()[0];
        let mut beyond = 0.0;
        for (idx, w) in density.iter().enumerate() {
            let x = (idx % nx) as f64 * dx;
            beyond += w * cell_fraction_beyond(x, dx, x_boundary);
        }
        Ok(beyond / total)
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.upper, &mut self.lower)
    }
}

/// Fraction of the cell `[x - dx/2, x + dx/2]` lying beyond `boundary`.
pub(crate) fn cell_fraction_beyond(x: f64, dx: f64, boundary: f64) -> f64 {
    ((x + 0.5 * dx - boundary) / dx).clamp(0.0, 1.0)
}

/// Something with an L2 norm on a grid.
pub trait L2Norm {
    fn l2_norm(&self) -> f64;
}

impl L2Norm for ComplexField1D {
    fn l2_norm(&self) -> f64 {
        ComplexField1D::l2_norm(self)
    }
}

impl L2Norm for Bispinor2D {
    fn l2_norm(&self) -> f64 {
        Bispinor2D::l2_norm(self)
    }
}

pub fn l2_norm<F: L2Norm>(field: &F) -> f64 {
    field.l2_norm()
}
