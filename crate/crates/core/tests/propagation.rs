mod common;

use common::*;
use cwf_transport::field::{ComplexField1D, Grid1D};
use cwf_transport::schrodinger::*;
use cwf_transport::Complex64;
use proptest::prelude::*;

fn small_grid() -> Grid1D {
    Grid1D::new(256e-9, 256).unwrap()
}

fn arb_field(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn arb_potential(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..0.5, n).prop_map(|v| v.into_iter().map(|e| e * Q).collect())
}

fn field_from(values: Vec<Complex64>) -> ComplexField1D {
    ComplexField1D::new(small_grid(), values).unwrap().normalized().unwrap()
}

/// Max pointwise deviation relative to the largest amplitude of `b`.
fn max_diff(a: &ComplexField1D, b: &ComplexField1D) -> f64 {
    let peak = b.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / peak
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kick_commutes_with_shifted_propagation(
        psi in arb_field(256),
        v in arb_potential(256),
        q in -2.0e9f64..2.0e9,
        dt_fs in 0.05f64..2.0,
    ) {
        let field = field_from(psi);
        let pot = Potential1D::new(small_grid(), v).unwrap();
        let err = verify_kick_identity(&field, &pot, gaas_mass(), dt_fs * 1e-15, q).unwrap();
        prop_assert!(err < 1e-9, "deviation {err}");
    }

    #[test]
    fn kick_shifts_mean_momentum(
        center in 108e-9f64..148e-9,
        sigma in 5e-9f64..12e-9,
        k0 in -1.0e9f64..1.0e9,
        q in -1.0e9f64..1.0e9,
    ) {
        let g = small_grid();
        let field = ComplexField1D::gaussian(g, center, sigma, k0);
        let before = field.expectation_momentum().unwrap();
        let kicked = apply_kick(&field, q);
        let after = kicked.expectation_momentum().unwrap();
        let expected = before + HBAR * g.representable(q);
        let scale = expected.abs().max(HBAR * g.dk());
        prop_assert!((after - expected).abs() < 1e-9 * scale, "{after} vs {expected}");
    }

    #[test]
    fn closed_propagation_is_unitary(
        psi in arb_field(256),
        v in arb_potential(256),
        dt_fs in 0.05f64..2.0,
    ) {
        let field = field_from(psi);
        let pot = Potential1D::new(small_grid(), v).unwrap();
        let prop = Propagator1D::new(small_grid(), gaas_mass(), dt_fs * 1e-15).unwrap();
        let mut f = field.clone();
        for _ in 0..10 {
            f = prop.step(&f, &pot, &KickState::default()).unwrap();
        }
        prop_assert!((f.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_step_undoes_forward_step(
        psi in arb_field(256),
        v in arb_potential(256),
        dt_fs in 0.05f64..2.0,
    ) {
        let field = field_from(psi);
        let pot = Potential1D::new(small_grid(), v).unwrap();
        let dt = dt_fs * 1e-15;
        let fwd = step(&field, &pot, &KickState::default(), gaas_mass(), dt).unwrap();
        let back = step(&fwd, &pot, &KickState::default(), gaas_mass(), -dt).unwrap();
        prop_assert!(max_diff(&back, &field) < 1e-12);
    }

    #[test]
    fn spectral_round_trip(psi in arb_field(256)) {
        let field = field_from(psi);
        let spec = field.to_momentum_space();
        let back = ComplexField1D::from_momentum_space(small_grid(), &spec).unwrap();
        prop_assert!(max_diff(&back, &field) < 1e-13);
    }

    #[test]
    fn absorber_never_adds_norm(
        psi in arb_field(256),
        strength_ev in 0.0f64..2.0,
    ) {
        let field = field_from(psi);
        let pot = Potential1D::flat(small_grid(), 0.0).absorbing(40e-9, strength_ev * Q).unwrap();
        let prop = Propagator1D::new(small_grid(), gaas_mass(), 1e-15).unwrap();
        let mut f = field;
        let mut last = f.norm_sqr();
        for _ in 0..5 {
            f = prop.step(&f, &pot, &KickState::default()).unwrap();
            let n = f.norm_sqr();
            prop_assert!(n <= last * (1.0 + 1e-12));
            last = n;
        }
    }
}

#[test]
fn free_gaussian_spreads_like_the_closed_form() {
    let g = Grid1D::new(2048e-9, 4096).unwrap();
    let sigma0 = 10e-9;
    let center = 1024e-9;
    let mut f = ComplexField1D::gaussian(g, center, sigma0, 0.0);
    let pot = Potential1D::flat(g, 0.0);
    let dt = 1e-15;
    let prop = Propagator1D::new(g, gaas_mass(), dt).unwrap();
    let width = |f: &ComplexField1D| {
        let d = f.density();
        let total: f64 = d.iter().sum();
        let mean: f64 = d.iter().enumerate().map(|(i, w)| w * g.x(i)).sum::<f64>() / total;
        let var: f64 = d.iter().enumerate().map(|(i, w)| w * (g.x(i) - mean).powi(2)).sum::<f64>() / total;
        var.sqrt()
    };
    for block in 1..=10 {
        for _ in 0..100 {
            f = prop.step(&f, &pot, &KickState::default()).unwrap();
        }
        let t = block as f64 * 100.0 * dt;
        let expected = free_gaussian_sigma(sigma0, gaas_mass(), t);
        let rel = (width(&f) - expected).abs() / expected;
        assert!(rel < 1e-3, "t = {t:e}: {} vs {expected}", width(&f));
    }
}

/// Packet transmission through one rectangular barrier, measured after the
/// packet has left the barrier, against the momentum-averaged plane-wave
/// transmission.
fn barrier_transmission_case(height_ev: f64, width_nm: f64, energy_ev: f64) -> (f64, f64) {
    let dx = 0.25e-9;
    let g = Grid1D::with_spacing(dx, 8192).unwrap();
    let start = 2000;
    let cells = (width_nm * 1e-9 / dx).round() as usize;
    let v0 = height_ev * Q;
    let values: Vec<f64> = (0..g.n())
        .map(|i| if i >= start && i < start + cells { v0 } else { 0.0 })
        .collect();
    let pot = Potential1D::new(g, values).unwrap();
    let sigma = 30e-9;
    let k0 = (2.0 * gaas_mass() * energy_ev * Q).sqrt() / HBAR;
    let x_left = g.x(start) - 0.5 * dx;
    let x_right = x_left + cells as f64 * dx;
    let mut f = ComplexField1D::gaussian(g, x_left - 6.0 * sigma, sigma, k0);
    let dt = 0.025e-15;
    let prop = Propagator1D::new(g, gaas_mass(), dt).unwrap();
    let v = HBAR * k0 / gaas_mass();
    let steps = ((12.0 * sigma + x_right - x_left) / v / dt).ceil() as usize;
    for _ in 0..steps {
        f = prop.step(&f, &pot, &KickState::default()).unwrap();
    }
    let measured = transmission_fraction(&f, x_right).unwrap();
    let profile = Layers {
        left: 0.0,
        layers: vec![(cells as f64 * dx, v0)],
        right: 0.0,
    };
    (measured, packet_averaged_transmission(&profile, gaas_mass(), k0, sigma))
}

#[test]
fn single_barrier_matches_transfer_matrix() {
    for (h, w, e) in [(0.3, 5.0, 0.15), (0.2, 10.0, 0.25)] {
        let (measured, oracle) = barrier_transmission_case(h, w, e);
        assert!(
            (measured - oracle).abs() < 0.02 * oracle,
            "barrier {h} eV x {w} nm at {e} eV: {measured} vs {oracle}"
        );
    }
}

#[test]
fn transfer_matrix_oracle_sanity() {
    let free = Layers { left: 0.0, layers: vec![(5e-9, 0.0)], right: 0.0 };
    assert!((tm_transmission(&free, gaas_mass(), 0.1 * Q) - 1.0).abs() < 1e-12);
    // Rectangular barrier above the top: T = 1 when k2 d = n pi.
    let v0 = 0.1 * Q;
    let k2 = std::f64::consts::PI / 10e-9;
    let e = v0 + HBAR * HBAR * k2 * k2 / (2.0 * gaas_mass());
    let b = Layers { left: 0.0, layers: vec![(10e-9, v0)], right: 0.0 };
    assert!((tm_transmission(&b, gaas_mass(), e) - 1.0).abs() < 1e-9);
    // Closed form below the top.
    let e = 0.05 * Q;
    let k = (2.0 * gaas_mass() * e).sqrt() / HBAR;
    let kappa = (2.0 * gaas_mass() * (v0 - e)).sqrt() / HBAR;
    let d = 3e-9;
    let s = (kappa * d).sinh();
    let closed = 1.0 / (1.0 + ((k * k + kappa * kappa) / (2.0 * k * kappa)).powi(2) * s * s);
    let b = Layers { left: 0.0, layers: vec![(d, v0)], right: 0.0 };
    assert!((tm_transmission(&b, gaas_mass(), e) - closed).abs() < 1e-12);
}
