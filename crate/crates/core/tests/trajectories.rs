mod common;

use common::*;
use cwf_transport::bohm::*;
use cwf_transport::field::{ComplexField1D, Grid1D};
use cwf_transport::schrodinger::{KickState, Potential1D, Propagator1D};
use cwf_transport::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn double_barrier(g: Grid1D) -> Potential1D {
    let v0 = 0.3 * Q;
    let values = (0..g.n())
        .map(|i| {
            let nm = g.x(i) * 1e9;
            if (500.0..502.0).contains(&nm) || (507.0..509.0).contains(&nm) {
                v0
            } else {
                0.0
            }
        })
        .collect();
    Potential1D::new(g, values).unwrap()
}

/// Run `count` trajectories with a packet through a double barrier; returns
/// the final field and the final positions.
fn double_barrier_ensemble(count: usize, seed: u64) -> (ComplexField1D, Vec<f64>) {
    let g = Grid1D::with_spacing(0.5e-9, 2048).unwrap();
    let pot = double_barrier(g);
    let k0 = (2.0 * gaas_mass() * 0.1 * Q).sqrt() / HBAR;
    let mut field = ComplexField1D::gaussian(g, 380e-9, 20e-9, k0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.05e-15;
    let prop = Propagator1D::new(g, gaas_mass(), dt).unwrap();
    let mut trajs: Vec<Trajectory1D> = sample_positions(&field, count, &mut rng)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, x)| Trajectory1D::new(i as u64, [x]))
        .collect();
    let interior = 0.0..g.length();
    let mut v_before = VelocityField1D::new(&field, gaas_mass()).unwrap();
    for step in 1..=6000 {
        field = prop.step(&field, &pot, &KickState::default()).unwrap();
        let v_after = VelocityField1D::new(&field, gaas_mass()).unwrap();
        let t = step as f64 * dt;
        for tr in trajs.iter_mut() {
            *tr = advance_trajectory_between(tr, &v_before, &v_after, dt, t, &interior);
        }
        v_before = v_after;
    }
    (field, trajs.iter().map(|t| t.x()).collect())
}

fn binned_counts(positions: &[f64], edges: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; edges.len() + 1];
    for &x in positions {
        counts[edges.partition_point(|&e| e <= x)] += 1;
    }
    counts
}

#[test]
fn ensemble_stays_distributed_as_density() {
    let (field, positions) = double_barrier_ensemble(2000, 11);
    let g = field.grid();
    let edges = equiprobable_edges(&field.density(), 0.0, g.dx(), 64);
    let counts = binned_counts(&positions, &edges);
    let expected = vec![2000.0 / 64.0; 64];
    let p = chi_square_p(&counts, &expected);
    assert!(p > 0.01, "chi-square p = {p}");
    // The packet has split: both sides of the structure are populated.
    let transmitted = positions.iter().filter(|&&x| x > 509e-9).count();
    assert!(transmitted > 20 && transmitted < 1980, "{transmitted}");
}

#[test]
fn samples_follow_the_density() {
    let g = Grid1D::new(400e-9, 1024).unwrap();
    let sigma = 25e-9;
    let center = 200e-9;
    let f = ComplexField1D::gaussian(g, center, sigma, 3e8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut xs = sample_positions(&f, 5000, &mut rng).unwrap();
    // Cell-uniform density: the exact CDF is the piecewise-linear
    // interpolation of the cumulative cell weights.
    let d = f.density();
    let total: f64 = d.iter().sum();
    let dx = g.dx();
    let cdf = |x: f64| {
        let s = x / dx + 0.5;
        let cell = s.floor() as usize;
        let below: f64 = d[..cell.min(d.len())].iter().sum();
        let part = if cell < d.len() { d[cell] * (s - cell as f64) } else { 0.0 };
        (below + part) / total
    };
    let dist = ks_distance(&mut xs, cdf);
    // 1% critical value of the KS statistic.
    assert!(dist < 1.63 / (5000f64).sqrt(), "KS distance {dist}");
}

#[test]
fn trajectories_never_cross() {
    let g = Grid1D::with_spacing(0.5e-9, 2048).unwrap();
    let pot = double_barrier(g);
    let k0 = (2.0 * gaas_mass() * 0.1 * Q).sqrt() / HBAR;
    let mut field = ComplexField1D::gaussian(g, 380e-9, 20e-9, k0);
    let dt = 0.2e-15;
    let prop = Propagator1D::new(g, gaas_mass(), dt).unwrap();
    let mut trajs: Vec<Trajectory1D> = (0..40)
        .map(|i| Trajectory1D::new(i, [330e-9 + 2.5e-9 * i as f64]))
        .collect();
    let interior = 0.0..g.length();
    let mut v_before = VelocityField1D::new(&field, gaas_mass()).unwrap();
    for step in 1..=1200 {
        field = prop.step(&field, &pot, &KickState::default()).unwrap();
        let v_after = VelocityField1D::new(&field, gaas_mass()).unwrap();
        for tr in trajs.iter_mut() {
            *tr = advance_trajectory_between(tr, &v_before, &v_after, dt, step as f64 * dt, &interior);
        }
        v_before = v_after;
        for w in trajs.windows(2) {
            assert!(w[0].x() <= w[1].x(), "order broken at step {step}");
        }
    }
}

#[test]
fn plane_wave_velocity_matches_group_velocity() {
    let g = Grid1D::new(200e-9, 512).unwrap();
    let k = 40.0 * g.dk();
    let f = ComplexField1D::plane_wave(g, Complex64::new(1.0, 0.0), k);
    let v = VelocityField1D::new(&f, gaas_mass()).unwrap();
    let expected = HBAR * k / gaas_mass();
    for x in [0.0, 13.3e-9, 101.7e-9, 199e-9] {
        assert!((v.at(x).unwrap() - expected).abs() < 1e-9 * expected);
    }
}

fn arb_members(count: usize, n: usize) -> impl Strategy<Value = Vec<Vec<Complex64>>> {
    prop::collection::vec(
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()),
        1..=count,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn velocity_ignores_scale_and_phase(
        scale in 1e-3f64..1e3,
        phase in 0.0f64..std::f64::consts::TAU,
        k0 in -5e8f64..5e8,
        x in 60e-9f64..140e-9,
    ) {
        let g = Grid1D::new(200e-9, 512).unwrap();
        let f = ComplexField1D::gaussian(g, 100e-9, 15e-9, k0);
        let c = Complex64::from_polar(scale, phase);
        let a = VelocityField1D::new(&f, gaas_mass()).unwrap().at(x).unwrap();
        let b = VelocityField1D::new(&f.scaled(c), gaas_mass()).unwrap().at(x).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn density_matrix_is_a_state(
        members in arb_members(6, 128),
        raw_weights in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let g = Grid1D::new(128e-9, 128).unwrap();
        let cwfs: Vec<ComplexField1D> = members
            .into_iter()
            .map(|v| ComplexField1D::new(g, v).unwrap())
            .collect();
        let weights = &raw_weights[..cwfs.len()];
        let rho = ensemble_density_matrix(&cwfs, weights, 64).unwrap();
        let report = positivity_report(&rho);
        prop_assert!(report.hermiticity_deviation < 1e-12);
        prop_assert!((report.trace - 1.0).abs() < 1e-12);
        prop_assert!(report.min_eigenvalue >= -1e-12);
        prop_assert!(report.all_pass());
        let eig = rho.eigenvalues();
        prop_assert!(eig.iter().sum::<f64>() > 1.0 - 1e-10);
        // Rank cannot exceed the number of members.
        let significant = eig.iter().filter(|&&l| l > 1e-10).count();
        prop_assert!(significant <= cwfs.len());
    }

    #[test]
    fn density_matrix_ignores_member_scale(
        members in arb_members(4, 64),
        scale in 0.1f64..10.0,
    ) {
        let g = Grid1D::new(64e-9, 64).unwrap();
        let cwfs: Vec<ComplexField1D> = members
            .into_iter()
            .map(|v| ComplexField1D::new(g, v).unwrap())
            .collect();
        let scaled: Vec<ComplexField1D> =
            cwfs.iter().map(|f| f.scaled(Complex64::new(0.0, scale))).collect();
        let w = vec![1.0; cwfs.len()];
        let a = ensemble_density_matrix(&cwfs, &w, 64).unwrap();
        let b = ensemble_density_matrix(&scaled, &w, 64).unwrap();
        let diff = (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-14);
    }
}

#[test]
fn trajectory_average_estimates_position_mean() {
    let g = Grid1D::new(400e-9, 1024).unwrap();
    let f = ComplexField1D::gaussian(g, 180e-9, 20e-9, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs = sample_positions(&f, 4000, &mut rng).unwrap();
    let cwfs = vec![f.clone(); xs.len()];
    let trajs: Vec<Trajectory1D> = xs.iter().enumerate().map(|(i, &x)| Trajectory1D::new(i as u64, [x])).collect();
    let w = vec![1.0; xs.len()];
    let mean = expectation_from_trajectories(|x| x, &cwfs, &trajs, &w).unwrap();
    // Standard error 20 nm / sqrt(4000) ~ 0.32 nm.
    assert!((mean - 180e-9).abs() < 1.3e-9, "{mean}");
}
