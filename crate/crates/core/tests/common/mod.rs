#![allow(dead_code)]

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const H: f64 = 6.626_070_15e-34;
pub const Q: f64 = 1.602_176_634e-19;
pub const KB: f64 = 1.380_649e-23;
pub const M0: f64 = 9.109_383_701_5e-31;
pub const VF: f64 = 1.0e6;

pub fn gaas_mass() -> f64 {
    0.067 * M0
}

/// Piecewise-constant profile: `(width, energy)` layers between two
/// semi-infinite leads at `left` and `right` energies (J).
pub struct Layers {
    pub left: f64,
    pub layers: Vec<(f64, f64)>,
    pub right: f64,
}

fn wavenumber(mass: f64, e: f64, v: f64) -> Complex64 {
    (Complex64::new(2.0 * mass * (e - v), 0.0)).sqrt() / HBAR
}

/// Transmission probability of a plane wave at energy `e` (J) incident from
/// the left lead.
pub fn tm_transmission(profile: &Layers, mass: f64, e: f64) -> f64 {
    if e <= profile.left || e <= profile.right {
        return 0.0;
    }
    let mut pots: Vec<(f64, f64)> = vec![(0.0, profile.left)];
    pots.extend(profile.layers.iter().copied());
    pots.push((0.0, profile.right));
    let advance = |mut s: [Complex64; 2]| {
        for w in pots.windows(2) {
            let (width, v1) = w[0];
            let (_, v2) = w[1];
            let k1 = wavenumber(mass, e, v1);
            let k2 = wavenumber(mass, e, v2);
            let i = Complex64::i();
            let a = s[0] * (i * k1 * width).exp();
            let b = s[1] * (-i * k1 * width).exp();
            let r = k1 / k2;
            s = [
                0.5 * ((1.0 + r) * a + (1.0 - r) * b),
                0.5 * ((1.0 - r) * a + (1.0 + r) * b),
            ];
        }
        s
    };
    let u = advance([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let v = advance([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
    let r = -u[1] / v[1];
    let t = u[0] + r * v[0];
    let kl = wavenumber(mass, e, profile.left).re;
    let kr = wavenumber(mass, e, profile.right).re;
    t.norm_sqr() * kr / kl
}

/// `T` averaged over the momentum distribution `exp(-2 sigma^2 (k - k0)^2)`
/// of a Gaussian packet with intensity width `sigma`, right-movers only.
pub fn packet_averaged_transmission(profile: &Layers, mass: f64, k0: f64, sigma: f64) -> f64 {
    let spread = 1.0 / (2.0 * sigma);
    let n = 4001;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..n {
        let k = k0 + spread * (-8.0 + 16.0 * j as f64 / (n - 1) as f64);
        if k <= 0.0 {
            continue;
        }
        let w = (-2.0 * sigma * sigma * (k - k0).powi(2)).exp();
        let e = HBAR * HBAR * k * k / (2.0 * mass);
        num += w * tm_transmission(profile, mass, e);
        den += w;
    }
    num / den
}

/// Layers sampled on device nodes `0..=cells` spaced `dx`, each node owning
/// a cell of width `dx`; the end nodes are lead nodes.
pub fn node_layers(values: &[f64], dx: f64) -> Layers {
    let n = values.len();
    Layers {
        left: values[0],
        layers: values[1..n - 1].iter().map(|&v| (dx, v)).collect(),
        right: values[n - 1],
    }
}

/// Double-barrier RTD sampled on `cells + 1` nodes with a linear bias drop.
pub fn rtd_nodes(bias: f64, dx: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| {
            let x = i as f64 * dx;
            let nm = x * 1e9;
            let inside = |a: f64, b: f64| nm >= a - 1e-6 && nm < b - 1e-6;
            let barrier = if inside(57.2, 58.8) || inside(61.2, 62.8) { 0.5 } else { 0.0 };
            Q * (barrier - bias * i as f64 / cells as f64)
        })
        .collect()
}

/// Two-terminal Landauer current (A, spin-degenerate) with contact Fermi
/// levels `ef` above their own band edges and temperature `t`.
pub fn landauer_current(profile: &Layers, mass: f64, ef: f64, t: f64, e_max: f64) -> f64 {
    let kt = KB * t;
    let n = 6000;
    let de = e_max / n as f64;
    let mut sum = 0.0;
    for j in 0..n {
        let e = profile.left + (j as f64 + 0.5) * de;
        let fl = 1.0 / (1.0 + ((e - profile.left - ef) / kt).exp());
        let fr = 1.0 / (1.0 + ((e - profile.right - ef) / kt).exp());
        sum += tm_transmission(profile, mass, e) * (fl - fr);
    }
    2.0 * Q / H * sum * de
}

/// Intensity standard deviation of a free Gaussian after time `t`.
pub fn free_gaussian_sigma(sigma0: f64, mass: f64, t: f64) -> f64 {
    let tau = 2.0 * mass * sigma0 * sigma0 / HBAR;
    sigma0 * (1.0 + (t / tau).powi(2)).sqrt()
}

/// Transmission of a graphene conduction electron of energy `e` (J) and
/// transverse wavenumber `ky` through a square barrier of height `v0` and
/// width `d`, by matching both spinor components at the two edges.
pub fn dirac_barrier_transmission(e: f64, ky: f64, v0: f64, d: f64) -> f64 {
    let i = Complex64::i();
    let wave = |v: f64| {
        let kk = ((e - v) / (HBAR * VF)).powi(2) - ky * ky;
        let q = Complex64::new(kk, 0.0).sqrt();
        let q = if kk < 0.0 { Complex64::new(0.0, q.im.abs()) } else { q * (e - v).signum() };
        let c = |qq: Complex64| HBAR * VF * (qq + i * ky) / (e - v);
        (q, c(q), c(-q))
    };
    // Columns: forward and backward waves at local coordinate 0.
    let basis = |c_plus: Complex64, c_minus: Complex64| [[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)], [c_plus, c_minus]];
    let solve = |m: [[Complex64; 2]; 2], rhs: [Complex64; 2]| {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
        ]
    };
    let apply = |m: [[Complex64; 2]; 2], a: [Complex64; 2]| {
        [m[0][0] * a[0] + m[0][1] * a[1], m[1][0] * a[0] + m[1][1] * a[1]]
    };
    let (_q0, cp0, cm0) = wave(0.0);
    let (q1, cp1, cm1) = wave(v0);
    let outer = basis(cp0, cm0);
    let inner = basis(cp1, cm1);
    let propagate = |a: [Complex64; 2]| {
        // outer amplitudes at x = 0 -> inner at 0 -> inner at d -> outer at d
        let b = solve(inner, apply(outer, a));
        let b = [b[0] * (i * q1 * d).exp(), b[1] * (-i * q1 * d).exp()];
        solve(outer, apply(inner, b))
    };
    let u = propagate([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let v = propagate([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
    let r = -u[1] / v[1];
    (u[0] + r * v[0]).norm_sqr()
}

/// Dirac barrier transmission averaged over the 2D momentum distribution of
/// a Gaussian packet with intensity width `sigma` around `k0`.
pub fn dirac_packet_transmission(k0: [f64; 2], sigma: f64, v0: f64, d: f64) -> f64 {
    let spread = 1.0 / (2.0 * sigma);
    let n = 121;
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let dk = [
                spread * (-5.0 + 10.0 * a as f64 / (n - 1) as f64),
                spread * (-5.0 + 10.0 * b as f64 / (n - 1) as f64),
            ];
            let k = [k0[0] + dk[0], k0[1] + dk[1]];
            if k[0] <= 0.0 {
                continue;
            }
            let w = (-2.0 * sigma * sigma * (dk[0] * dk[0] + dk[1] * dk[1])).exp();
            let e = HBAR * VF * k[0].hypot(k[1]);
            num += w * dirac_barrier_transmission(e, k[1], v0, d);
            den += w;
        }
    }
    num / den
}

/// Pearson chi-square p-value for observed counts against expected counts.
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Equal-probability bin edges (interior cut points) of a density sampled on
/// cells of width `dx` centred on `x0 + i dx`, `bins` bins.
pub fn equiprobable_edges(density: &[f64], x0: f64, dx: f64, bins: usize) -> Vec<f64> {
    let total: f64 = density.iter().sum();
    let mut edges = Vec::with_capacity(bins - 1);
    let mut acc = 0.0;
    let mut target = 1;
    for (i, &d) in density.iter().enumerate() {
        let p = d / total;
        while target < bins && acc + p >= target as f64 / bins as f64 {
            let frac = (target as f64 / bins as f64 - acc) / p;
            edges.push(x0 + (i as f64 - 0.5 + frac) * dx);
            target += 1;
        }
        acc += p;
    }
    edges
}
