use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::injection::{bundle_rng, contact_rng};
use super::{
    assemble_potential, coulomb_single, inject, Contact, DeviceSpec, ElectronBundle, Layout,
    SimulationParams,
};
use crate::bohm::{
    advance_trajectory_between, ensemble_density_matrix, positivity_report, PositivityReport,
    VelocityField1D,
};
use crate::error::{Error, Result};
use crate::field::ComplexField1D;
use crate::scattering::{
    collision_probability, select_event_parabolic, total_rate, CollisionEvent, Mechanism,
    MechanismKind,
};
use crate::schrodinger::{Potential1D, Propagator1D};
use crate::units::{ELEMENTARY_CHARGE, HBAR, NM};

/// Norm below which a CWF counts as absorbed.
const ABSORBED_NORM_SQR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Transmitted,
    Reflected,
    Absorbed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Transmitted => "transmitted",
            Outcome::Reflected => "reflected",
            Outcome::Absorbed => "absorbed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub id: u64,
    pub contact_of_origin: Contact,
    pub outcome: Outcome,
    pub injection_time: f64,
    pub time: f64,
    pub collisions: u32,
    /// Time spent between the contacts, s.
    pub device_time: f64,
}

/// What happened during one global step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    /// `(id, device coordinate in m)`; filled every `position_sample_steps`.
    pub positions: Vec<(u64, f64)>,
    pub events: Vec<(u64, CollisionEvent)>,
    pub exits: Vec<ExitRecord>,
    /// Trajectory crossings of the device midplane.
    pub crossings_lr: u32,
    pub crossings_rl: u32,
    /// Instantaneous Ramo-Shockley current, A (electron flow left to right
    /// is positive).
    pub current: f64,
    pub injected: u32,
    pub dropped: u32,
    pub electrons: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivitySample {
    pub time: f64,
    pub electrons: usize,
    pub report: PositivityReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeBookkeeping {
    pub injected: u64,
    /// Arrivals refused because the electron cap was reached; not injected.
    pub dropped: u64,
    pub transmitted: u64,
    pub reflected: u64,
    pub absorbed: u64,
    pub inside: u64,
}

impl ChargeBookkeeping {
    pub fn balanced(&self) -> bool {
        self.injected == self.transmitted + self.reflected + self.absorbed + self.inside
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    /// Counts in [`MechanismKind::ALL`] order.
    pub by_mechanism: [u64; 4],
    pub total: u64,
    /// Completed device transits (transmitted or reflected electrons).
    pub transits: u64,
    /// Collisions suffered by electrons that completed a transit.
    pub transit_collisions: u64,
    /// Total electron time spent between the contacts, s.
    pub device_time: f64,
}

impl CollisionStats {
    pub fn per_transit(&self) -> f64 {
        if self.transits == 0 {
            0.0
        } else {
            self.transit_collisions as f64 / self.transits as f64
        }
    }

    /// Collisions per electron per second inside the device.
    pub fn per_unit_time(&self) -> f64 {
        if self.device_time > 0.0 {
            self.total as f64 / self.device_time
        } else {
            0.0
        }
    }

    fn count(&mut self, kind: MechanismKind) {
        if let Some(i) = MechanismKind::ALL.iter().position(|&k| k == kind) {
            self.by_mechanism[i] += 1;
        }
        self.total += 1;
    }
}

/// Append-only log of a device run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub bias_v: f64,
    pub dt: f64,
    pub duration: f64,
    pub device_length: f64,
    /// Device coordinate of the counting plane, m.
    pub counting_plane: f64,
    pub ballistic: bool,
    pub steps: Vec<StepRecord>,
    pub positivity: Vec<PositivitySample>,
    pub bookkeeping: ChargeBookkeeping,
    pub collisions: CollisionStats,
}

impl RunRecord {
    pub fn positivity_pass(&self) -> bool {
        self.positivity.iter().all(|s| s.report.all_pass())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.positivity
            .iter()
            .map(|s| s.report.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn window(&self) -> Range<f64> {
        0.0..self.duration
    }

    pub fn crossings(&self, window: &Range<f64>) -> (u64, u64) {
        in_window(self, window).fold((0, 0), |(lr, rl), s| {
            (lr + s.crossings_lr as u64, rl + s.crossings_rl as u64)
        })
    }
}

/// Steps whose interval `(time - dt, time]` lies in `window`.
fn in_window<'a>(record: &'a RunRecord, window: &'a Range<f64>) -> impl Iterator<Item = &'a StepRecord> {
    let half = 0.5 * record.dt;
    record
        .steps
        .iter()
        .filter(move |s| s.time - record.dt > window.start - half && s.time < window.end + half)
}

/// `e (N_lr - N_rl) / T` from midplane crossings in `window`.
pub fn current_counting(record: &RunRecord, window: Range<f64>) -> f64 {
    let t = window.end - window.start;
    if !(t > 0.0) {
        return 0.0;
    }
    let (lr, rl) = record.crossings(&window);
    ELEMENTARY_CHARGE * (lr as f64 - rl as f64) / t
}

/// Time average of the Ramo-Shockley current over `window`.
pub fn current_ramo(record: &RunRecord, window: Range<f64>) -> f64 {
    let t = window.end - window.start;
    if !(t > 0.0) {
        return 0.0;
    }
    in_window(record, &window).map(|s| s.current * record.dt).sum::<f64>() / t
}

/// Summary of one bias point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvPoint {
    pub bias_v: f64,
    pub current_counting: f64,
    pub current_ramo: f64,
    /// `e sqrt(N_lr + N_rl) / T`.
    pub noise_floor: f64,
    pub crossings_lr: u64,
    pub crossings_rl: u64,
    /// The net crossing count exceeds ten times its Poisson standard error.
    pub converged: bool,
    pub collisions: CollisionStats,
    pub bookkeeping: ChargeBookkeeping,
    pub positivity_pass: bool,
    pub min_eigenvalue: f64,
}

impl IvPoint {
    pub fn from_record(record: &RunRecord) -> Self {
        let window = record.window();
        let (lr, rl) = record.crossings(&window);
        let net = lr as f64 - rl as f64;
        let n = (lr + rl) as f64;
        IvPoint {
            bias_v: record.bias_v,
            current_counting: current_counting(record, window.clone()),
            current_ramo: current_ramo(record, window),
            noise_floor: ELEMENTARY_CHARGE * n.sqrt() / record.duration,
            crossings_lr: lr,
            crossings_rl: rl,
            converged: n > 0.0 && 10.0 * n.sqrt() <= net.abs(),
            collisions: record.collisions,
            bookkeeping: record.bookkeeping,
            positivity_pass: record.positivity_pass(),
            min_eigenvalue: record.min_eigenvalue(),
        }
    }

    /// `|I_count - I_ramo| / max(|I|, I_noise)`.
    pub fn estimator_discrepancy(&self) -> f64 {
        let scale = self
            .current_counting
            .abs()
            .max(self.current_ramo.abs())
            .max(self.noise_floor);
        if scale == 0.0 {
            0.0
        } else {
            (self.current_counting - self.current_ramo).abs() / scale
        }
    }
}

/// One independent run per bias. Bias point `i` uses seed `seed + i`, so a
/// ballistic and a dissipative sweep with the same seed see the same
/// injected electrons.
pub fn iv_sweep(
    device: &DeviceSpec,
    biases: &[f64],
    params: &SimulationParams,
    mechanisms: &[Mechanism],
    seed: u64,
) -> Result<Vec<(IvPoint, RunRecord)>> {
    biases
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let sim = DeviceSimulation::new(
                device.with_bias(v),
                params.clone(),
                mechanisms.to_vec(),
                seed.wrapping_add(i as u64),
            )?;
            let record = sim.run()?;
            Ok((IvPoint::from_record(&record), record))
        })
        .collect()
}

/// Many-electron state of a device run.
#[derive(Debug, Clone)]
pub struct DeviceSimulation {
    device: DeviceSpec,
    params: SimulationParams,
    layout: Layout,
    mechanisms: Vec<Mechanism>,
    propagator: Propagator1D,
    base_potential: Potential1D,
    base_half: Vec<Complex64>,
    seed: u64,
    bundles: Vec<ElectronBundle>,
    steps_taken: usize,
    next_id: u64,
    contact_rngs: [ChaCha8Rng; 2],
    injection: bool,
    next_dm_sample: f64,
    record: RunRecord,
}

struct StepContext<'a> {
    propagator: &'a Propagator1D,
    layout: &'a Layout,
    mechanisms: &'a [Mechanism],
    rate: f64,
    mass: f64,
    t_new: f64,
}

struct BundleStep {
    x_old: f64,
    x_new: f64,
    event: Option<CollisionEvent>,
}

impl DeviceSimulation {
    pub fn new(
        device: DeviceSpec,
        params: SimulationParams,
        mechanisms: Vec<Mechanism>,
        seed: u64,
    ) -> Result<Self> {
        let layout = Layout::new(&device, &params)?;
        for m in &mechanisms {
            m.validate()?;
        }
        let propagator = Propagator1D::new(*layout.grid(), device.mass(), params.dt())?;
        let base_potential = assemble_potential(&device, &layout, &[], params.absorber_strength_ev)?;
        let base_half = propagator.half_factors(&base_potential);
        let ballistic = total_rate(&mechanisms) == 0.0;
        let record = RunRecord {
            seed,
            bias_v: device.applied_bias_v,
            dt: params.dt(),
            duration: params.steps() as f64 * params.dt(),
            device_length: device.length(),
            counting_plane: 0.5 * device.length(),
            ballistic,
            steps: Vec::with_capacity(params.steps()),
            positivity: Vec::new(),
            bookkeeping: ChargeBookkeeping::default(),
            collisions: CollisionStats::default(),
        };
        Ok(DeviceSimulation {
            next_dm_sample: params.density_matrix_interval_ps * crate::units::PS,
            contact_rngs: [contact_rng(seed, Contact::Left), contact_rng(seed, Contact::Right)],
            device,
            params,
            layout,
            mechanisms,
            propagator,
            base_potential,
            base_half,
            seed,
            bundles: Vec::new(),
            steps_taken: 0,
            next_id: 0,
            injection: true,
            record,
        })
    }

    /// Disable contact injection.
    pub fn without_injection(mut self) -> Self {
        self.injection = false;
        self
    }

    /// Place an electron by hand with its trajectory at box coordinate `x`.
    pub fn insert_bundle(&mut self, field: ComplexField1D, x: f64, contact: Contact) -> Result<u64> {
        if field.grid() != self.layout.grid() {
            return Err(Error::GridMismatch("bundle field is not on the device grid".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        let bundle = ElectronBundle::with_position(
            id,
            field,
            x,
            self.device.mass(),
            contact,
            self.time(),
            self.params.sub_kicks,
            bundle_rng(self.seed, id),
        )?;
        self.bundles.push(bundle);
        self.record.bookkeeping.injected += 1;
        Ok(id)
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    pub fn params(&self) -> &SimulationParams {
        &self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Band profile, bias ramp and absorbers without Coulomb terms.
    pub fn base_potential(&self) -> &Potential1D {
        &self.base_potential
    }

    pub fn bundles(&self) -> &[ElectronBundle] {
        &self.bundles
    }

    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.propagator.dt()
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn is_finished(&self) -> bool {
        self.steps_taken >= self.params.steps()
    }

    /// Per-electron half-step potential factors with the Coulomb energy of
    /// every other electron; `None` means the bare factors apply.
    fn coulomb_factors(&self) -> Vec<Option<Vec<Complex64>>> {
        let n = self.bundles.len();
        if !self.params.coulomb || n < 2 {
            return vec![None; n];
        }
        let singles: Vec<Option<Vec<f64>>> = self
            .bundles
            .iter()
            .map(|b| coulomb_single(&self.device, &self.layout, b.trajectory.x()))
            .collect();
        let nodes = self.layout.cells() + 1;
        let mut total = vec![0.0; nodes];
        for u in singles.iter().flatten() {
            total.iter_mut().zip(u).for_each(|(t, v)| *t += v);
        }
        let scale = -0.5 * self.propagator.dt() / HBAR;
        let offset = self.layout.offset();
        singles
            .iter()
            .map(|own| {
                let others: Vec<f64> = match own {
                    Some(u) => total.iter().zip(u).map(|(t, v)| t - v).collect(),
                    None => total.clone(),
                };
                if others.iter().all(|&v| v == 0.0) {
                    return None;
                }
                let mut half = self.base_half.clone();
                half[offset..offset + nodes]
                    .iter_mut()
                    .zip(&others)
                    .for_each(|(h, &u)| *h *= Complex64::from_polar(1.0, scale * u));
                Some(half)
            })
            .collect()
    }

    /// One global step: potential assembly, field propagation, trajectory
    /// advance, collisions, injection, retirement, record append.
    pub fn run_step(&mut self) -> Result<()> {
        let dt = self.propagator.dt();
        let t_new = (self.steps_taken + 1) as f64 * dt;
        let halves = self.coulomb_factors();

        let ctx = StepContext {
            propagator: &self.propagator,
            layout: &self.layout,
            mechanisms: &self.mechanisms,
            rate: total_rate(&self.mechanisms),
            mass: self.device.mass(),
            t_new,
        };
        let base_half = &self.base_half;
        let interior = self.layout.interior();
        let results: Vec<Result<BundleStep>> = self
            .bundles
            .par_iter_mut()
            .zip(halves.par_iter())
            .map(|(b, h)| advance_bundle(b, h.as_deref().unwrap_or(base_half), &ctx, &interior))
            .collect();

        let mid = 0.5 * (self.layout.device_start() + self.layout.device_end());
        let (lo, hi) = (self.layout.device_start(), self.layout.device_end());
        let ramo_scale = ELEMENTARY_CHARGE / (self.device.length() * dt);
        let mut step = StepRecord {
            time: t_new,
            positions: Vec::new(),
            events: Vec::new(),
            exits: Vec::new(),
            crossings_lr: 0,
            crossings_rl: 0,
            current: 0.0,
            injected: 0,
            dropped: 0,
            electrons: 0,
        };
        for (b, r) in self.bundles.iter().zip(results) {
            let r = r?;
            if r.x_old < mid && r.x_new >= mid {
                step.crossings_lr += 1;
            } else if r.x_old >= mid && r.x_new < mid {
                step.crossings_rl += 1;
            }
            step.current += ramo_scale * (r.x_new.clamp(lo, hi) - r.x_old.clamp(lo, hi));
            if let Some(ev) = r.event {
                step.events.push((b.id(), ev));
                self.record.collisions.count(ev.mechanism);
            }
        }

        if self.injection {
            for (i, contact) in [Contact::Left, Contact::Right].into_iter().enumerate() {
                let arrivals = inject(
                    contact,
                    &self.device,
                    &self.layout,
                    &self.params,
                    dt,
                    t_new,
                    &mut self.contact_rngs[i],
                    &mut self.next_id,
                    self.seed,
                )?;
                for bundle in arrivals {
                    let active = self.bundles.iter().filter(|b| b.trajectory.alive).count();
                    if active < self.params.electron_cap {
                        self.bundles.push(bundle);
                        step.injected += 1;
                    } else {
                        step.dropped += 1;
                    }
                }
            }
        }

        let buffer = self.params.exit_buffer_nm * NM;
        let (start, end) = (self.layout.device_start(), self.layout.device_end());
        let middle = 0.5 * (start + end);
        let mut kept = Vec::with_capacity(self.bundles.len());
        for mut b in self.bundles.drain(..) {
            let x = b.trajectory.x();
            if b.entered && (x < start - buffer || x > end + buffer) {
                b.trajectory.alive = false;
            }
            let outcome = if !b.trajectory.alive {
                let exit_left = x < middle;
                let same_side = exit_left == (b.contact_of_origin == Contact::Left);
                Some(if same_side {
                    Outcome::Reflected
                } else {
                    Outcome::Transmitted
                })
            } else if b.field.norm_sqr() < ABSORBED_NORM_SQR {
                Some(Outcome::Absorbed)
            } else {
                None
            };
            match outcome {
                None => kept.push(b),
                Some(outcome) => {
                    let book = &mut self.record.bookkeeping;
                    match outcome {
                        Outcome::Transmitted => book.transmitted += 1,
                        Outcome::Reflected => book.reflected += 1,
                        Outcome::Absorbed => book.absorbed += 1,
                    }
                    let stats = &mut self.record.collisions;
                    stats.device_time += b.device_time;
                    if outcome != Outcome::Absorbed {
                        stats.transits += 1;
                        stats.transit_collisions += b.collisions as u64;
                    }
                    step.exits.push(ExitRecord {
                        id: b.id(),
                        contact_of_origin: b.contact_of_origin,
                        outcome,
                        injection_time: b.injection_time,
                        time: t_new,
                        collisions: b.collisions,
                        device_time: b.device_time,
                    });
                }
            }
        }
        self.bundles = kept;
        self.steps_taken += 1;

        self.record.bookkeeping.injected += step.injected as u64;
        self.record.bookkeeping.dropped += step.dropped as u64;
        step.electrons = self.bundles.len() as u32;
        if self.steps_taken.is_multiple_of(self.params.position_sample_steps) {
            let start = self.layout.device_start();
            step.positions = self
                .bundles
                .iter()
                .map(|b| (b.id(), b.trajectory.x() - start))
                .collect();
        }
        if t_new >= self.next_dm_sample - 0.5 * dt {
            self.next_dm_sample += self.params.density_matrix_interval_ps * crate::units::PS;
            if !self.bundles.is_empty() {
                let fields: Vec<ComplexField1D> = self.bundles.iter().map(|b| b.field.clone()).collect();
                let weights = vec![1.0; fields.len()];
                let rho = ensemble_density_matrix(&fields, &weights, self.params.density_matrix_dim)?;
                self.record.positivity.push(PositivitySample {
                    time: t_new,
                    electrons: fields.len(),
                    report: positivity_report(&rho),
                });
            }
        }
        self.record.steps.push(step);
        Ok(())
    }

    /// Close the record: electrons still present are counted as inside.
    pub fn into_record(mut self) -> RunRecord {
        self.record.bookkeeping.inside = self.bundles.len() as u64;
        self.record.collisions.device_time += self.bundles.iter().map(|b| b.device_time).sum::<f64>();
        self.record
    }

    /// Step until the configured duration and return the record.
    pub fn run(mut self) -> Result<RunRecord> {
        while !self.is_finished() {
            self.run_step()?;
        }
        Ok(self.into_record())
    }
}

fn advance_bundle(
    b: &mut ElectronBundle,
    half: &[Complex64],
    ctx: &StepContext<'_>,
    interior: &Range<f64>,
) -> Result<BundleStep> {
    let dt = ctx.propagator.dt();
    let x_old = b.trajectory.x();
    if b.kick.pending().is_some() {
        b.field = b.kick.advance(&b.field);
        b.velocity = VelocityField1D::new(&b.field, ctx.mass)?;
    }
    let next = ctx.propagator.step_with_factors(&b.field, half, &b.kick)?;
    let v_next = VelocityField1D::new(&next, ctx.mass)?;
    b.trajectory = advance_trajectory_between(&b.trajectory, &b.velocity, &v_next, dt, ctx.t_new, interior);
    b.field = next;
    b.velocity = v_next;
    let x_new = b.trajectory.x();

    let mut event = None;
    if b.trajectory.alive && ctx.layout.in_device(x_new) {
        b.entered = true;
        b.device_time += dt;
        if ctx.rate > 0.0 && b.rng.random::<f64>() < collision_probability(ctx.rate, dt) {
            if let Ok(v) = b.velocity.at(x_new) {
                let k = ctx.mass * v / HBAR;
                if let Some(ev) = select_event_parabolic(k, ctx.mass, ctx.mechanisms, &mut b.rng) {
                    let ev = ev.with_time(ctx.t_new);
                    b.field = b.kick.collide(&b.field, ev);
                    b.velocity = VelocityField1D::new(&b.field, ctx.mass)?;
                    b.collisions += 1;
                    event = Some(ev);
                }
            }
        }
    }
    Ok(BundleStep { x_old, x_new, event })
}
