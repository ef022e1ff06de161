//! Bohmian trajectories and ensemble statistics.
//!
//! Velocities are current over density, evaluated from linearly interpolated
//! samples of the field and its spectral derivative. Trajectories are
//! integrated with the explicit midpoint rule. Where the density drops below
//! [`NODE_THRESHOLD`] times its peak the velocity is undefined and the
//! trajectory is held in place for that step.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Bispinor2D, ComplexField1D, Grid1D, Grid2D};
use crate::units::{FERMI_VELOCITY, HBAR};

/// Relative density below which a point is treated as a node.
pub const NODE_THRESHOLD: f64 = 1e-12;

/// Largest density-matrix dimension built by [`ensemble_density_matrix`].
pub const MAX_DENSITY_MATRIX_DIM: usize = 512;

/// A Bohmian particle in `D` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<const D: usize> {
    pub id: u64,
    #[serde(with = "serde_array")]
    pub position: [f64; D],
    pub alive: bool,
    pub history: Option<Vec<(f64, Vec<f64>)>>,
}

mod serde_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(a: &[f64; D], s: S) -> Result<S::Ok, S::Error> {
        a.as_slice().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<[f64; D], De::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("wrong position dimension"))
    }
}

pub type Trajectory1D = Trajectory<1>;
pub type Trajectory2D = Trajectory<2>;

impl<const D: usize> Trajectory<D> {
    pub fn new(id: u64, position: [f64; D]) -> Self {
        Trajectory {
            id,
            position,
            alive: true,
            history: None,
        }
    }

    pub fn with_history(mut self, time: f64) -> Self {
        self.history = Some(vec![(time, self.position.to_vec())]);
        self
    }

    fn record(&mut self, time: f64) {
        if let Some(h) = self.history.as_mut() {
            h.push((time, self.position.to_vec()));
        }
    }
}

impl Trajectory1D {
    pub fn x(&self) -> f64 {
        self.position[0]
    }
}

/// Linear interpolation weights on a periodic axis: `(i0, i1, frac)`.
#[inline]
fn interp(x: f64, dx: f64, n: usize) -> (usize, usize, f64) {
    let s = x / dx;
    let fl = s.floor();
    let frac = s - fl;
    let i0 = (fl as i64).rem_euclid(n as i64) as usize;
    (i0, (i0 + 1) % n, frac)
}

/// Velocity field of a 1D scalar CWF, precomputed for repeated queries.
#[derive(Debug, Clone)]
pub struct VelocityField1D {
    grid: Grid1D,
    mass: f64,
    psi: Vec<Complex64>,
    dpsi: Vec<Complex64>,
    threshold: f64,
}

impl VelocityField1D {
    pub fn new(field: &ComplexField1D, mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        let peak = field.values().iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        Ok(VelocityField1D {
            grid: *field.grid(),
            mass,
            psi: field.values().to_vec(),
            dpsi: field.derivative(),
            threshold: NODE_THRESHOLD * peak,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Bohmian velocity at `x` (m/s).
    pub fn at(&self, x: f64) -> Result<f64> {
        let (i0, i1, t) = interp(x, self.grid.dx(), self.grid.n());
        let psi = self.psi[i0] * (1.0 - t) + self.psi[i1] * t;
        let rho = psi.norm_sqr();
        if !(rho > self.threshold) {
            return Err(Error::Node { position: x });
        }
        let dpsi = self.dpsi[i0] * (1.0 - t) + self.dpsi[i1] * t;
        Ok(HBAR / self.mass * (psi.conj() * dpsi).im / rho)
    }
}

pub fn bohm_velocity(field: &ComplexField1D, x: f64, mass: f64) -> Result<f64> {
    VelocityField1D::new(field, mass)?.at(x)
}

/// Velocity field `v_f (psi^dag sigma psi) / (psi^dag psi)` of a bispinor.
#[derive(Debug, Clone)]
pub struct VelocityField2D {
    grid: Grid2D,
    upper: Vec<Complex64>,
    lower: Vec<Complex64>,
    threshold: f64,
}

impl VelocityField2D {
    pub fn new(spinor: &Bispinor2D) -> Self {
        let peak = spinor.density().into_iter().fold(0.0, f64::max);
        VelocityField2D {
            grid: *spinor.grid(),
            upper: spinor.upper().to_vec(),
            lower: spinor.lower().to_vec(),
            threshold: NODE_THRESHOLD * peak,
        }
    }

    pub fn at(&self, r: [f64; 2]) -> Result<[f64; 2]> {
        let [nx, ny] = self.grid.dims();
        let [dx, dy] = self.grid.spacings();
        let (x0, x1, tx) = interp(r[0], dx, nx);
        let (y0, y1, ty) = interp(r[1], dy, ny);
        let w = [
            (x0, y0, (1.0 - tx) * (1.0 - ty)),
            (x1, y0, tx * (1.0 - ty)),
            (x0, y1, (1.0 - tx) * ty),
            (x1, y1, tx * ty),
        ];
        let (mut u, mut l) = (Complex64::default(), Complex64::default());
        for (ix, iy, wt) in w {
            let idx = self.grid.index(ix, iy);
            u += self.upper[idx] * wt;
            l += self.lower[idx] * wt;
        }
        let rho = u.norm_sqr() + l.norm_sqr();
        if !(rho > self.threshold) {
            return Err(Error::Node { position: r[0] });
        }
        let ul = u.conj() * l;
        Ok([
            FERMI_VELOCITY * 2.0 * ul.re / rho,
            FERMI_VELOCITY * 2.0 * ul.im / rho,
        ])
    }
}

pub fn bohm_velocity_dirac(spinor: &Bispinor2D, r: [f64; 2]) -> Result<[f64; 2]> {
    VelocityField2D::new(spinor).at(r)
}

/// Draw `count` i.i.d. positions from `|psi|^2` by inverting the cumulative
/// distribution; each grid point owns the cell `[x - dx/2, x + dx/2)` and the
/// density is uniform within a cell.
pub fn sample_positions<R: Rng + ?Sized>(
    field: &ComplexField1D,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    let grid = field.grid();
    let cdf = cumulative(&field.density());
    let total = *cdf.last().unwrap_or(&0.0);
    if total == 0.0 {
        return Err(Error::domain("cannot sample from a zero-norm field"));
    }
    Ok((0..count)
        .map(|_| {
            let (cell, frac) = invert_cdf(&cdf, rng.random::<f64>() * total);
            let x = grid.x(cell) + (frac - 0.5) * grid.dx();
            x.rem_euclid(grid.length())
        })
        .collect())
}

/// 2D analogue of [`sample_positions`] over `psi^dag psi`.
pub fn sample_positions_2d<R: Rng + ?Sized>(
    spinor: &Bispinor2D,
    count: usize,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    let grid = spinor.grid();
    let cdf = cumulative(&spinor.density());
    let total = *cdf.last().unwrap_or(&0.0);
    if total == 0.0 {
        return Err(Error::domain("cannot sample from a zero-norm bispinor"));
    }
    let [dx, dy] = grid.spacings();
    let [lx, ly] = grid.lengths();
    Ok((0..count)
        .map(|_| {
            let (cell, _) = invert_cdf(&cdf, rng.random::<f64>() * total);
            let r = grid.position(cell);
            let jx = rng.random::<f64>() - 0.5;
            let jy = rng.random::<f64>() - 0.5;
            [
                (r[0] + jx * dx).rem_euclid(lx),
                (r[1] + jy * dy).rem_euclid(ly),
            ]
        })
        .collect())
}

fn cumulative(density: &[f64]) -> Vec<f64> {
    density
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Cell index and position within it for a cumulative target `u`.
fn invert_cdf(cdf: &[f64], u: f64) -> (usize, f64) {
    let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    let lo = if cell == 0 { 0.0 } else { cdf[cell - 1] };
    let w = cdf[cell] - lo;
    let frac = if w > 0.0 { ((u - lo) / w).clamp(0.0, 1.0) } else { 0.5 };
    (cell, frac)
}

/// Largest distance, in grid cells, a trajectory moves in one sub-step.
const MAX_CELLS_PER_SUBSTEP: f64 = 0.5;
const MAX_SUBSTEPS: usize = 100_000;

/// Midpoint integration through a velocity field interpolated linearly in
/// time between `before` (at `t`) and `after` (at `t + dt`). The step is
/// split so that no sub-step moves more than half a cell; where the motion
/// is slow this is a single midpoint step with the stage-two velocity
/// `(before + after) / 2`. A node freezes the trajectory for the rest of the
/// step. Trajectories that end outside `interior` are marked dead.
pub fn advance_trajectory_between(
    traj: &Trajectory1D,
    before: &VelocityField1D,
    after: &VelocityField1D,
    dt: f64,
    time_after: f64,
    interior: &Range<f64>,
) -> Trajectory1D {
    let mut out = traj.clone();
    if !out.alive {
        return out;
    }
    let v = |x: f64, s: f64| -> Result<f64> { Ok((1.0 - s) * before.at(x)? + s * after.at(x)?) };
    let reach = MAX_CELLS_PER_SUBSTEP * before.grid.dx();
    let mut x = traj.x();
    let mut s = 0.0;
    for _ in 0..MAX_SUBSTEPS {
        if s >= 1.0 {
            break;
        }
        let moved = v(x, s).and_then(|v1| {
            let h = (1.0 - s).min(reach / (v1.abs() * dt.abs()).max(f64::MIN_POSITIVE));
            let x_mid = x + 0.5 * h * dt * v1;
            Ok((x + h * dt * v(x_mid, s + 0.5 * h)?, h))
        });
        match moved {
            Ok((x_new, h)) => {
                x = x_new;
                s += h;
            }
            Err(_) => break,
        }
    }
    out.position[0] = x;
    if !interior.contains(&out.position[0]) {
        out.alive = false;
    }
    out.record(time_after);
    out
}

/// Advance through a static field.
pub fn advance_trajectory(
    traj: &Trajectory1D,
    field: &ComplexField1D,
    mass: f64,
    dt: f64,
    interior: &Range<f64>,
) -> Result<Trajectory1D> {
    let v = VelocityField1D::new(field, mass)?;
    Ok(advance_trajectory_between(traj, &v, &v, dt, 0.0, interior))
}

/// 2D analogue of [`advance_trajectory_between`]; `y` is periodic,
/// `interior_x` bounds `x`.
pub fn advance_trajectory_2d(
    traj: &Trajectory2D,
    before: &VelocityField2D,
    after: &VelocityField2D,
    dt: f64,
    time_after: f64,
    interior_x: &Range<f64>,
) -> Trajectory2D {
    let mut out = traj.clone();
    if !out.alive {
        return out;
    }
    let v = |r: [f64; 2], s: f64| -> Result<[f64; 2]> {
        let a = before.at(r)?;
        let b = after.at(r)?;
        Ok([(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]])
    };
    let [dx, dy] = before.grid.spacings();
    let reach = MAX_CELLS_PER_SUBSTEP * dx.min(dy);
    let ly = before.grid.lengths()[1];
    let mut r = traj.position;
    let mut s = 0.0;
    for _ in 0..MAX_SUBSTEPS {
        if s >= 1.0 {
            break;
        }
        let moved = v(r, s).and_then(|v1| {
            let speed = v1[0].hypot(v1[1]);
            let h = (1.0 - s).min(reach / (speed * dt.abs()).max(f64::MIN_POSITIVE));
            let mid = [r[0] + 0.5 * h * dt * v1[0], r[1] + 0.5 * h * dt * v1[1]];
            let vm = v(mid, s + 0.5 * h)?;
            Ok(([r[0] + h * dt * vm[0], (r[1] + h * dt * vm[1]).rem_euclid(ly)], h))
        });
        match moved {
            Ok((p, h)) => {
                r = p;
                s += h;
            }
            Err(_) => break,
        }
    }
    out.position = r;
    if !interior_x.contains(&out.position[0]) {
        out.alive = false;
    }
    out.record(time_after);
    out
}

/// Weighted mixture of normalized, coarse-grained CWF projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDensityMatrix {
    dim: usize,
    matrix: DMatrix<Complex64>,
    weights_sum: f64,
    positions: Vec<f64>,
}

impl EnsembleDensityMatrix {
    /// Wrap an arbitrary square matrix (for diagnostics); positions default
    /// to the row index.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("matrix", "must be square"));
        }
        let dim = matrix.nrows();
        Ok(EnsembleDensityMatrix {
            dim,
            matrix,
            weights_sum: 1.0,
            positions: (0..dim).map(|i| i as f64).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn weights_sum(&self) -> f64 {
        self.weights_sum
    }

    /// Block-centre coordinates of the coarse basis (m).
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Tr(rho O)` for an observable diagonal in position.
    pub fn trace_with_diagonal(&self, observable: impl Fn(f64) -> f64) -> f64 {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, &x)| self.matrix[(i, i)].re * observable(x))
            .sum()
    }

    /// Eigenvalues in descending order. Entries below `1e-30` of the largest
    /// are zeroed first, which moves no eigenvalue by more than `dim * 1e-30`
    /// of the largest entry.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let scale = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let floor = 1e-30 * scale;
        let mut m = self.matrix.clone();
        m.iter_mut().for_each(|z| {
            if z.norm() < floor {
                *z = Complex64::default();
            }
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

fn coarse_dim(n: usize, max_dim: usize) -> usize {
    let cap = max_dim.clamp(1, MAX_DENSITY_MATRIX_DIM).min(n);
    // largest power of two not above cap; grids are powers of two so it divides n
    1 << (usize::BITS - 1 - cap.leading_zeros())
}

/// Block-average a CWF to `dim` amplitudes and normalize to unit length.
fn coarse_amplitudes(field: &ComplexField1D, dim: usize) -> Result<Vec<Complex64>> {
    let block = field.grid().n() / dim;
    let mut c: Vec<Complex64> = field
        .values()
        .chunks(block)
        .map(|ch| ch.iter().sum::<Complex64>() / block as f64)
        .collect();
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::domain("ensemble member has zero norm"));
    }
    c.iter_mut().for_each(|z| *z /= norm);
    Ok(c)
}

const REDUCTION_CHUNK: usize = 32;

/// `rho = sum_j p_j |psi_j><psi_j| / sum_j p_j` with every CWF block-averaged
/// to at most `max_dim` (<= 512) amplitudes and normalized first.
///
/// Partial sums over fixed-size chunks are reduced in order, so the result
/// does not depend on the thread count.
pub fn ensemble_density_matrix(
    cwfs: &[ComplexField1D],
    weights: &[f64],
    max_dim: usize,
) -> Result<EnsembleDensityMatrix> {
    if cwfs.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    if cwfs.len() != weights.len() {
        return Err(Error::invalid("weights", "one weight per CWF required"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights", "must be finite and non-negative"));
    }
    let weights_sum: f64 = weights.iter().sum();
    if !(weights_sum > 0.0) {
        return Err(Error::invalid("weights", "must have a positive sum"));
    }
    let grid = *cwfs[0].grid();
    if cwfs.iter().any(|f| f.grid() != &grid) {
        return Err(Error::GridMismatch("ensemble members on different grids".into()));
    }
    let dim = coarse_dim(grid.n(), max_dim);
    let block = grid.n() / dim;
    let members: Vec<(Vec<Complex64>, f64)> = cwfs
        .iter()
        .zip(weights)
        .map(|(f, &w)| Ok((coarse_amplitudes(f, dim)?, w / weights_sum)))
        .collect::<Result<_>>()?;

    let partials: Vec<DMatrix<Complex64>> = members
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut m = DMatrix::<Complex64>::zeros(dim, dim);
            for (c, p) in chunk {
                for j in 0..dim {
                    let cj = c[j].conj() * *p;
                    for i in 0..=j {
                        m[(i, j)] += c[i] * cj;
                    }
                }
            }
            m
        })
        .collect();
    let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
    for p in &partials {
        matrix += p;
    }
    for j in 0..dim {
        matrix[(j, j)].im = 0.0;
        for i in 0..j {
            matrix[(j, i)] = matrix[(i, j)].conj();
        }
    }
    let positions = (0..dim)
        .map(|b| grid.x(b * block) + 0.5 * (block - 1) as f64 * grid.dx())
        .collect();
    Ok(EnsembleDensityMatrix {
        dim,
        matrix,
        weights_sum,
        positions,
    })
}

/// Tolerance on the smallest eigenvalue, relative to the trace.
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub hermiticity_deviation: f64,
    /// `min_eigenvalue >= -1e-8 * trace`.
    pub cp_pass: bool,
}

impl PositivityReport {
    /// Positivity plus Hermiticity within 1e-10 and unit trace within 1e-10.
    pub fn all_pass(&self) -> bool {
        self.cp_pass && self.hermiticity_deviation < 1e-10 && (self.trace - 1.0).abs() < 1e-10
    }
}

pub fn positivity_report(rho: &EnsembleDensityMatrix) -> PositivityReport {
    let trace = rho.trace();
    let min_eigenvalue = rho.eigenvalues().last().copied().unwrap_or(0.0);
    PositivityReport {
        min_eigenvalue,
        trace,
        hermiticity_deviation: rho.hermiticity_deviation(),
        cp_pass: min_eigenvalue >= -POSITIVITY_TOLERANCE * trace,
    }
}

/// `<O> = sum_j p_j O(x_j) / sum_j p_j` over trajectory positions, one
/// trajectory per CWF.
pub fn expectation_from_trajectories(
    observable: impl Fn(f64) -> f64,
    cwfs: &[ComplexField1D],
    trajectories: &[Trajectory1D],
    weights: &[f64],
) -> Result<f64> {
    if cwfs.len() != trajectories.len() || weights.len() != trajectories.len() {
        return Err(Error::invalid(
            "trajectories",
            "need exactly one trajectory and one weight per CWF",
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weights", "must have a positive sum"));
    }
    Ok(trajectories
        .iter()
        .zip(weights)
        .map(|(t, w)| w * observable(t.x()))
        .sum::<f64>()
        / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ELECTRON_MASS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

    fn grid() -> Grid1D {
        Grid1D::new(400e-9, 1024).unwrap()
    }

    fn mass() -> f64 {
        0.067 * ELECTRON_MASS
    }

    #[test]
    fn plane_wave_velocity_everywhere() {
        let g = grid();
        let k = 30.0 * g.dk();
        let f = ComplexField1D::plane_wave(g, Complex64::new(0.7, 0.0), k);
        let v = VelocityField1D::new(&f, mass()).unwrap();
        for x in [0.0, 1.234e-9, 77.7e-9, 399.9e-9] {
            let got = v.at(x).unwrap();
            assert!((got - HBAR * k / mass()).abs() < 1e-10 * HBAR * k / mass());
        }
    }

    #[test]
    fn standing_wave_has_zero_velocity_and_nodes() {
        let g = grid();
        let k = 8.0 * g.dk();
        let f = ComplexField1D::from_fn(g, |x| Complex64::new((k * x).sin(), 0.0));
        let v = VelocityField1D::new(&f, mass()).unwrap();
        assert_eq!(v.at(g.x(13)).unwrap(), 0.0);
        assert!(matches!(v.at(0.0), Err(Error::Node { .. })));
    }

    #[test]
    fn velocity_ignores_normalization() {
        let g = grid();
        let f = ComplexField1D::gaussian(g, 200e-9, 30e-9, 4e8);
        let c = Complex64::new(-3.0, 1e3);
        let a = bohm_velocity(&f, 210e-9, mass()).unwrap();
        let b = bohm_velocity(&f.scaled(c), 210e-9, mass()).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn dirac_velocity_of_uniform_spinor() {
        let g = Grid2D::new([100e-9, 100e-9], [64, 64]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let b = Bispinor2D::new(
            g,
            vec![Complex64::new(s, 0.0); g.len()],
            vec![Complex64::new(s, 0.0); g.len()],
        )
        .unwrap();
        let v = bohm_velocity_dirac(&b, [33e-9, 71e-9]).unwrap();
        assert!((v[0] - FERMI_VELOCITY).abs() < 1e-9 && v[1].abs() < 1e-9);
    }

    #[test]
    fn delta_density_samples_in_one_cell() {
        let g = grid();
        let mut vals = vec![Complex64::default(); g.n()];
        vals[300] = Complex64::new(1.0, 0.0);
        let f = ComplexField1D::new(g, vals).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = sample_positions(&f, 1000, &mut rng).unwrap();
        assert!(xs.iter().all(|x| (x - g.x(300)).abs() <= 0.5 * g.dx()));
        assert!(sample_positions(&ComplexField1D::zeros(g), 3, &mut rng).is_err());
    }

    #[test]
    fn plane_wave_trajectory_moves_uniformly() {
        let g = grid();
        let k = 25.0 * g.dk();
        let f = ComplexField1D::plane_wave(g, Complex64::new(1.0, 0.0), k);
        let t = Trajectory::new(0, [50e-9]);
        let dt = 1e-15;
        let out = advance_trajectory(&t, &f, mass(), dt, &(0.0..400e-9)).unwrap();
        let expect = 50e-9 + HBAR * k / mass() * dt;
        assert!((out.x() - expect).abs() < 1e-12 * expect);
        assert!(out.alive);
        let far = advance_trajectory(&Trajectory::new(1, [399.9e-9]), &f, mass(), 1e-13, &(0.0..399.95e-9)).unwrap();
        assert!(!far.alive);
    }

    #[test]
    fn real_field_trajectory_is_static() {
        let g = grid();
        let f = ComplexField1D::from_fn(g, |x| Complex64::new((-(x - 2e-7f64).powi(2) / 1e-15).exp(), 0.0));
        let t = Trajectory::new(0, [190e-9]);
        let out = advance_trajectory(&t, &f, mass(), 1e-14, &(0.0..400e-9)).unwrap();
        assert_eq!(out.x(), 190e-9);
    }

    #[test]
    fn density_matrix_of_single_and_orthogonal_members() {
        let g = grid();
        let a = ComplexField1D::gaussian(g, 100e-9, 10e-9, 0.0);
        let rho = ensemble_density_matrix(std::slice::from_ref(&a), &[2.0], 512).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-10);
        assert!(ev[1..].iter().all(|e| e.abs() < 1e-10));

        let k = 10.0 * g.dk();
        let p = ComplexField1D::plane_wave(g, Complex64::new(1.0, 0.0), k);
        let q = ComplexField1D::from_fn(g, |x| (I * 2.0 * k * x).exp());
        let rho = ensemble_density_matrix(&[p, q], &[1.0, 1.0], 256).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev[0] - 0.5).abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10);
        assert!(positivity_report(&rho).all_pass());
    }

    #[test]
    fn density_matrix_errors() {
        assert!(ensemble_density_matrix(&[], &[], 64).is_err());
        let f = ComplexField1D::gaussian(grid(), 100e-9, 10e-9, 0.0);
        assert!(ensemble_density_matrix(std::slice::from_ref(&f), &[-1.0], 64).is_err());
        assert!(ensemble_density_matrix(&[ComplexField1D::zeros(grid())], &[1.0], 64).is_err());
    }

    #[test]
    fn negative_eigenvalue_is_flagged() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.1, 0.0),
            Complex64::new(-0.1, 0.0),
        ]));
        let report = positivity_report(&EnsembleDensityMatrix::from_matrix(m).unwrap());
        assert!(!report.cp_pass);
        assert!((report.min_eigenvalue + 0.1).abs() < 1e-12);
    }

    #[test]
    fn constant_observable_averages_to_one() {
        let g = grid();
        let f = ComplexField1D::gaussian(g, 100e-9, 10e-9, 0.0);
        let cwfs = vec![f.clone(), f.clone(), f];
        let trajs: Vec<_> = (0..3).map(|i| Trajectory::new(i, [i as f64 * 1e-8])).collect();
        let got = expectation_from_trajectories(|_| 1.0, &cwfs, &trajs, &[0.2, 0.3, 5.0]).unwrap();
        assert!((got - 1.0).abs() < 1e-15);
        assert!(expectation_from_trajectories(|_| 1.0, &cwfs, &trajs[..2], &[1.0, 1.0]).is_err());
    }
}
