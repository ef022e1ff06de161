use std::f64::consts::PI;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohm::{advance_trajectory_2d, sample_positions_2d, Trajectory2D, VelocityField2D};
use crate::dirac::{
    apply_dirac_collision, band_weights, gaussian_packet, BandIndex, DiracCollision,
    DiracPropagator, Potential2D,
};
use crate::error::Result;
use crate::field::{Bispinor2D, Grid2D};
use crate::scattering::{CollisionEvent, MechanismKind};
use crate::units::{ev_to_joule, joule_to_ev, FERMI_VELOCITY, FS, HBAR, NM, PS};

/// Central wave number of the graphene packets, 1/m.
pub const GRAPHENE_K0: f64 = 2.27e8;

/// A collision imposed at a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedCollision {
    pub step: usize,
    pub collision: DiracCollision,
    pub event: CollisionEvent,
}

/// A single-electron 2D Dirac experiment.
#[derive(Debug, Clone)]
pub struct DiracScenario {
    pub name: String,
    pub grid: Grid2D,
    pub potential: Potential2D,
    pub center: [f64; 2],
    pub sigma: f64,
    pub k0: [f64; 2],
    pub band: BandIndex,
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub collision: Option<ForcedCollision>,
    pub trajectories: usize,
    /// Trajectories leaving this x range are retired.
    pub interior_x: Range<f64>,
    /// Transmission is measured as the norm beyond this x.
    pub transmission_boundary: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracSample {
    pub time: f64,
    pub norm: f64,
    pub centroid: [f64; 2],
    pub mean_k: [f64; 2],
    pub p_conduction: f64,
    pub p_valence: f64,
    /// Mean Bohmian velocity over the live trajectories, m/s.
    pub mean_velocity: [f64; 2],
    /// Norm beyond the transmission boundary, relative to the initial norm.
    pub transmission: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracRecord {
    pub name: String,
    pub seed: u64,
    pub dt: f64,
    pub samples: Vec<DiracSample>,
    pub trajectories: Vec<Trajectory2D>,
    pub collision: Option<ForcedCollision>,
}

impl DiracRecord {
    pub fn last(&self) -> Option<&DiracSample> {
        self.samples.last()
    }

    pub fn final_transmission(&self) -> Option<f64> {
        self.last().and_then(|s| s.transmission)
    }

    pub fn collision_time(&self) -> Option<f64> {
        self.collision.map(|c| c.event.time)
    }
}

fn sample(
    spinor: &Bispinor2D,
    trajs: &[Trajectory2D],
    velocity: &VelocityField2D,
    time: f64,
    boundary: Option<f64>,
) -> Result<DiracSample> {
    let norm = spinor.norm_sqr();
    let (p_conduction, p_valence) = band_weights(spinor)?;
    let mut v = [0.0; 2];
    let mut n = 0.0;
    for t in trajs.iter().filter(|t| t.alive) {
        if let Ok(u) = velocity.at(t.position) {
            v[0] += u[0];
            v[1] += u[1];
            n += 1.0;
        }
    }
    if n > 0.0 {
        v = [v[0] / n, v[1] / n];
    }
    let transmission = match boundary {
        Some(x) => Some(spinor.fraction_beyond_x(x)? * norm),
        None => None,
    };
    Ok(DiracSample {
        time,
        norm,
        centroid: spinor.centroid()?,
        mean_k: spinor.mean_wavevector()?,
        p_conduction,
        p_valence,
        mean_velocity: v,
        transmission,
    })
}

/// Propagate the scenario's packet with its trajectories, applying the
/// forced collision (if any) after the configured step.
pub fn run_dirac(scenario: &DiracScenario, seed: u64) -> Result<DiracRecord> {
    let mut spinor = gaussian_packet(
        &scenario.grid,
        scenario.center,
        scenario.sigma,
        scenario.k0,
        scenario.band,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajs: Vec<Trajectory2D> = sample_positions_2d(&spinor, scenario.trajectories.max(1), &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Trajectory2D::new(i as u64, r).with_history(0.0))
        .collect();
    let prop = DiracPropagator::new(scenario.grid, scenario.dt)?;
    let mut velocity = VelocityField2D::new(&spinor);
    let mut samples = vec![sample(&spinor, &trajs, &velocity, 0.0, scenario.transmission_boundary)?];
    let mut collision = None;

    for step in 1..=scenario.steps {
        let time = step as f64 * scenario.dt;
        let next = prop.step(&spinor, &scenario.potential)?;
        let v_next = VelocityField2D::new(&next);
        trajs = trajs
            .iter()
            .map(|t| advance_trajectory_2d(t, &velocity, &v_next, scenario.dt, time, &scenario.interior_x))
            .collect();
        spinor = next;
        velocity = v_next;
        if let Some(forced) = scenario.collision.filter(|c| c.step == step) {
            spinor = apply_dirac_collision(&spinor, &forced.collision)?;
            velocity = VelocityField2D::new(&spinor);
            collision = Some(ForcedCollision {
                event: forced.event.with_time(time),
                ..forced
            });
        }
        if step % scenario.sample_every == 0 || step == scenario.steps {
            samples.push(sample(&spinor, &trajs, &velocity, time, scenario.transmission_boundary)?);
        }
    }
    Ok(DiracRecord {
        name: scenario.name.clone(),
        seed,
        dt: scenario.dt,
        samples,
        trajectories: trajs,
        collision,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrapheneCase {
    /// In-band elastic deflection by 45 degrees.
    Elastic,
    /// Same deflection ending in the valence band.
    BandFlip,
}

/// Conduction packet moving along +y that is deflected at 0.1 ps from
/// `(0, k0)` to `(k0, k0) / sqrt 2`, either elastically or into the valence
/// band. Free propagation for 0.3 ps on a 1024 nm periodic box.
pub fn graphene_collision_scenario(case: GrapheneCase) -> Result<DiracScenario> {
    graphene_collision_scenario_on(case, [256, 256])
}

/// [`graphene_collision_scenario`] sampled on `dims` points.
pub fn graphene_collision_scenario_on(case: GrapheneCase, dims: [usize; 2]) -> Result<DiracScenario> {
    let grid = Grid2D::new([1024.0 * NM, 1024.0 * NM], dims)?;
    let dt = 1.0 * FS;
    let k0 = [0.0, GRAPHENE_K0];
    let kf = [GRAPHENE_K0 / 2f64.sqrt(), GRAPHENE_K0 / 2f64.sqrt()];
    let flip = case == GrapheneCase::BandFlip;
    let collision = DiracCollision::between(k0, kf, flip);
    let event = CollisionEvent {
        mechanism: if flip {
            MechanismKind::OpticalEmission
        } else {
            MechanismKind::AcousticElastic
        },
        q: collision.q,
        delta_e_ev: if flip {
            -2.0 * joule_to_ev(HBAR * FERMI_VELOCITY * GRAPHENE_K0)
        } else {
            0.0
        },
        band_flip: u8::from(flip),
        time: 0.0,
    };
    let t_c = 0.1 * PS;
    Ok(DiracScenario {
        name: match case {
            GrapheneCase::Elastic => "graphene_elastic".into(),
            GrapheneCase::BandFlip => "graphene_band_flip".into(),
        },
        potential: Potential2D::zero(grid),
        grid,
        center: [512.0 * NM, 300.0 * NM],
        sigma: 40.0 * NM,
        k0,
        band: BandIndex::CONDUCTION,
        dt,
        steps: (0.3 * PS / dt).round() as usize,
        sample_every: 10,
        collision: Some(ForcedCollision {
            step: (t_c / dt).round() as usize,
            collision,
            event,
        }),
        trajectories: 16,
        interior_x: 0.0..grid.lengths()[0],
        transmission_boundary: None,
    })
}

pub fn graphene_collision_preset(case: GrapheneCase, seed: u64) -> Result<DiracRecord> {
    run_dirac(&graphene_collision_scenario(case)?, seed)
}

/// Barrier geometry of the Klein-tunneling experiment, nm.
pub const KLEIN_BARRIER_NM: (f64, f64) = (600.0, 800.0);
pub const KLEIN_BARRIER_EV: f64 = 0.4;

/// The three Klein-tunneling runs: normal incidence, oblique incidence at
/// pi/6, and oblique incidence rotated to normal by an elastic collision at
/// 0.15 ps, before the packet reaches the barrier.
pub fn klein_scenarios() -> Result<[DiracScenario; 3]> {
    klein_scenarios_on([512, 128])
}

/// [`klein_scenarios`] sampled on `dims` points.
pub fn klein_scenarios_on(dims: [usize; 2]) -> Result<[DiracScenario; 3]> {
    let grid = Grid2D::new([1600.0 * NM, 512.0 * NM], dims)?;
    let (x0, x1) = KLEIN_BARRIER_NM;
    let margin = 0.1 * grid.lengths()[0];
    let potential = Potential2D::barrier_x(grid, x0 * NM, x1 * NM, ev_to_joule(KLEIN_BARRIER_EV))
        .absorbing_x(margin, ev_to_joule(0.2))?;
    let dt = 0.5 * FS;
    let steps = (0.8 * PS / dt).round() as usize;
    let beta0 = PI / 6.0;
    let oblique = [GRAPHENE_K0 * beta0.cos(), GRAPHENE_K0 * beta0.sin()];
    let normal = [GRAPHENE_K0, 0.0];
    let base = DiracScenario {
        name: String::new(),
        grid,
        potential,
        center: [300.0 * NM, 256.0 * NM],
        sigma: 40.0 * NM,
        k0: normal,
        band: BandIndex::CONDUCTION,
        dt,
        steps,
        sample_every: 20,
        collision: None,
        trajectories: 16,
        interior_x: margin..grid.lengths()[0] - grid.spacings()[0] - margin,
        transmission_boundary: Some(x1 * NM),
    };
    let collision = DiracCollision::between(oblique, normal, false);
    let event = CollisionEvent {
        mechanism: MechanismKind::AcousticElastic,
        q: collision.q,
        delta_e_ev: 0.0,
        band_flip: 0,
        time: 0.0,
    };
    Ok([
        DiracScenario {
            name: "klein_normal".into(),
            ..base.clone()
        },
        DiracScenario {
            name: "klein_oblique".into(),
            k0: oblique,
            ..base.clone()
        },
        DiracScenario {
            name: "klein_oblique_collision".into(),
            k0: oblique,
            collision: Some(ForcedCollision {
                step: (0.15 * PS / dt).round() as usize,
                collision,
                event,
            }),
            ..base
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleinRecord {
    pub normal_control: DiracRecord,
    pub oblique: DiracRecord,
    pub oblique_collision: DiracRecord,
}

impl KleinRecord {
    pub fn runs(&self) -> [&DiracRecord; 3] {
        [&self.normal_control, &self.oblique, &self.oblique_collision]
    }
}

pub fn klein_preset(seed: u64) -> Result<KleinRecord> {
    let scenarios = klein_scenarios()?;
    let mut runs = scenarios
        .par_iter()
        .map(|s| run_dirac(s, seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || runs.next().expect("three Klein runs");
    Ok(KleinRecord {
        normal_control: next(),
        oblique: next(),
        oblique_collision: next(),
    })
}
