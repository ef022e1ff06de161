//! Preset execution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cwf_transport::device::{
    graphene_collision_scenario_on, iv_sweep, klein_scenarios_on, run_dirac, DiracRecord, DiracScenario,
    GrapheneCase, IvPoint, RunRecord,
};
use cwf_transport::scattering::{Mechanism, MechanismKind};
use cwf_transport::units::{FS, PS};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::config::{Preset, ResolvedConfig, RunConfig};
use crate::output::{create_dir, float, CsvTable, FileEntry, InvariantCheck, Manifest, OutputError, SCHEMA_VERSION};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CWFSIM_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "cwfsim-out";

/// Counting and Ramo currents must agree this closely at converged biases.
pub const ESTIMATOR_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Simulation(#[from] cwf_transport::Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub tables: Vec<CsvTable>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed()
    }
}

/// The config value, else the environment variable, else `cwfsim-out`.
pub fn resolve_out_dir(config: &RunConfig, env: Option<&str>) -> PathBuf {
    config
        .output_dir
        .clone()
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

/// Execute the preset, write its tables and manifest under `out_dir`.
pub fn run(resolved: &ResolvedConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let config = &resolved.config;
    let mut timings = BTreeMap::new();
    let product = if config.preset.is_device() {
        run_device(config, &mut timings)?
    } else {
        run_graphene(config, &mut timings)?
    };

    let write_start = Instant::now();
    create_dir(out_dir)?;
    for t in &product.tables {
        t.write(out_dir, config)?;
    }
    timings.insert("write".into(), write_start.elapsed().as_secs_f64());
    timings.insert("total".into(), started.elapsed().as_secs_f64());

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        preset: config.preset.to_string(),
        seed: config.seed,
        ballistic: config.ballistic(),
        config: config.clone(),
        provenance: resolved.provenance.clone(),
        invariants: product.invariants,
        files: product
            .tables
            .iter()
            .map(|t| FileEntry {
                file: t.file_name(),
                columns: t.columns.iter().map(|c| c.to_string()).collect(),
                rows: t.rows.len(),
            })
            .collect(),
        timings_s: timings,
        summary: product.summary,
    };
    manifest.write(out_dir)?;
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        tables: product.tables,
    })
}

struct Product {
    tables: Vec<CsvTable>,
    invariants: Vec<InvariantCheck>,
    summary: serde_json::Value,
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("cwfsim: {}", msg.as_ref());
}

type Sweep = (&'static str, Vec<(IvPoint, RunRecord)>);

fn run_device(config: &RunConfig, timings: &mut BTreeMap<String, f64>) -> Result<Product, RunError> {
    let device = config.device.as_ref().expect("validated device preset");
    let params = config.simulation.as_ref().expect("validated device preset");
    let mechanisms = config.mechanisms.as_deref().expect("validated device preset");
    let sweep = config.sweep.as_ref().expect("validated device preset");
    let ballistic = config.ballistic().unwrap_or(true);

    let mut plan: Vec<(&'static str, &[Mechanism])> = Vec::new();
    if ballistic {
        plan.push(("ballistic", &[]));
    } else {
        if sweep.ballistic_reference {
            plan.push(("ballistic", &[]));
        }
        plan.push(("dissipative", mechanisms));
    }

    let mut sweeps: Vec<Sweep> = Vec::new();
    for (label, mechs) in plan {
        progress(format!(
            "{label} sweep over {} bias points, {} ps each",
            sweep.biases_v.len(),
            params.duration_ps
        ));
        let t0 = Instant::now();
        let points = iv_sweep(device, &sweep.biases_v, params, mechs, config.seed)?;
        let elapsed = t0.elapsed().as_secs_f64();
        progress(format!("{label} sweep finished in {elapsed:.1} s"));
        timings.insert(format!("{label}_sweep"), elapsed);
        sweeps.push((label, points));
    }

    Ok(Product {
        tables: device_tables(&sweeps),
        invariants: device_invariants(&sweeps),
        summary: device_summary(&sweeps),
    })
}

fn device_tables(sweeps: &[Sweep]) -> Vec<CsvTable> {
    let mut iv = CsvTable::new(
        "iv",
        &[
            "sweep",
            "bias_v",
            "current_counting_a",
            "current_ramo_a",
            "noise_floor_a",
            "crossings_lr",
            "crossings_rl",
            "converged",
            "estimator_discrepancy",
        ],
    );
    let mut collisions = CsvTable::new(
        "collisions",
        &[
            "sweep",
            "bias_v",
            "acoustic_elastic",
            "impurity_elastic",
            "optical_emission",
            "optical_absorption",
            "total",
            "transits",
            "collisions_per_transit",
            "collisions_per_second",
        ],
    );
    let mut events = CsvTable::new(
        "collision_events",
        &["sweep", "bias_v", "time_s", "electron", "mechanism", "q_per_m", "delta_e_ev"],
    );
    let mut charge = CsvTable::new(
        "charge",
        &["sweep", "bias_v", "injected", "dropped", "transmitted", "reflected", "absorbed", "inside", "balanced"],
    );
    let mut trajectories = CsvTable::new("trajectories", &["sweep", "bias_v", "time_s", "electron", "x_m"]);
    let mut density = CsvTable::new(
        "density_matrix",
        &["sweep", "bias_v", "time_s", "electrons", "min_eigenvalue", "trace", "hermiticity_deviation", "cp_pass"],
    );

    for (label, points) in sweeps {
        for (p, record) in points {
            let head = || vec![label.to_string(), float(p.bias_v)];
            let mut row = head();
            row.extend([
                float(p.current_counting),
                float(p.current_ramo),
                float(p.noise_floor),
                p.crossings_lr.to_string(),
                p.crossings_rl.to_string(),
                p.converged.to_string(),
                float(p.estimator_discrepancy()),
            ]);
            iv.push(row);

            let c = &p.collisions;
            let mut row = head();
            row.extend(c.by_mechanism.iter().map(|n| n.to_string()));
            row.extend([
                c.total.to_string(),
                c.transits.to_string(),
                float(c.per_transit()),
                float(c.per_unit_time()),
            ]);
            collisions.push(row);

            let b = &p.bookkeeping;
            let mut row = head();
            row.extend(
                [b.injected, b.dropped, b.transmitted, b.reflected, b.absorbed, b.inside].map(|n| n.to_string()),
            );
            row.push(b.balanced().to_string());
            charge.push(row);

            for step in &record.steps {
                for &(id, x) in &step.positions {
                    let mut row = head();
                    row.extend([float(step.time), id.to_string(), float(x)]);
                    trajectories.push(row);
                }
                for (id, e) in &step.events {
                    let mut row = head();
                    row.extend([
                        float(e.time),
                        id.to_string(),
                        e.mechanism.as_str().to_string(),
                        float(e.q[0]),
                        float(e.delta_e_ev),
                    ]);
                    events.push(row);
                }
            }

            for s in &record.positivity {
                let mut row = head();
                row.extend([
                    float(s.time),
                    s.electrons.to_string(),
                    float(s.report.min_eigenvalue),
                    float(s.report.trace),
                    float(s.report.hermiticity_deviation),
                    s.report.all_pass().to_string(),
                ]);
                density.push(row);
            }
        }
    }
    vec![iv, collisions, events, charge, trajectories, density]
}

fn device_invariants(sweeps: &[Sweep]) -> Vec<InvariantCheck> {
    let all = || sweeps.iter().flat_map(|(_, p)| p.iter());
    let samples: usize = all().map(|(_, r)| r.positivity.len()).sum();
    let min_eig = all().map(|(p, _)| p.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let positivity = all().all(|(p, _)| p.positivity_pass);

    let unbalanced: Vec<String> = sweeps
        .iter()
        .flat_map(|(label, points)| {
            points
                .iter()
                .filter(|(p, _)| !p.bookkeeping.balanced())
                .map(move |(p, _)| format!("{label} {} V", p.bias_v))
        })
        .collect();

    let converged: Vec<&IvPoint> = all().map(|(p, _)| p).filter(|p| p.converged).collect();
    let worst = converged.iter().map(|p| p.estimator_discrepancy()).fold(0.0, f64::max);

    let finite = all().all(|(p, _)| p.current_counting.is_finite() && p.current_ramo.is_finite());

    vec![
        InvariantCheck::new(
            "density_matrix_positivity",
            positivity,
            if samples == 0 {
                "no density-matrix sample fell inside the run".to_string()
            } else {
                format!("{samples} samples, min eigenvalue {min_eig:e}")
            },
        ),
        InvariantCheck::new(
            "charge_bookkeeping",
            unbalanced.is_empty(),
            if unbalanced.is_empty() {
                "injected = transmitted + reflected + absorbed + inside at every bias".to_string()
            } else {
                format!("unbalanced at {}", unbalanced.join(", "))
            },
        ),
        InvariantCheck::new(
            "estimator_agreement",
            worst <= ESTIMATOR_TOLERANCE,
            format!(
                "{} converged points, worst relative discrepancy {worst:.4} (limit {ESTIMATOR_TOLERANCE})",
                converged.len()
            ),
        ),
        InvariantCheck::new("finite_currents", finite, "counting and Ramo currents are finite"),
    ]
}

/// Index of the current peak and whether the current drops after it.
pub fn peak_and_ndr(currents: &[f64]) -> Option<(usize, bool)> {
    let (peak, &ip) = currents
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let ndr = peak + 1 < currents.len() && currents[peak + 1..].iter().any(|&i| i < ip);
    Some((peak, ndr))
}

fn device_summary(sweeps: &[Sweep]) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for (label, points) in sweeps {
        let currents: Vec<f64> = points.iter().map(|(p, _)| p.current_counting).collect();
        let Some((peak, ndr)) = peak_and_ndr(&currents) else {
            continue;
        };
        let valley = currents[peak..].iter().copied().fold(f64::INFINITY, f64::min);
        let per_transit: Vec<f64> = points.iter().map(|(p, _)| p.collisions.per_transit()).collect();
        let off: Vec<f64> = per_transit
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != peak)
            .map(|(_, &c)| c)
            .collect();
        let off_mean = off.iter().sum::<f64>() / off.len().max(1) as f64;
        out.insert(
            label.to_string(),
            json!({
                "peak_bias_v": points[peak].0.bias_v,
                "peak_current_a": currents[peak],
                "valley_current_a": valley,
                "negative_differential_resistance": ndr,
                "collisions_per_transit_on_resonance": per_transit[peak],
                "collisions_per_transit_off_resonance": off_mean,
            }),
        );
    }
    serde_json::Value::Object(out)
}

fn scenarios(config: &RunConfig) -> Result<Vec<DiracScenario>, RunError> {
    let d = config.dirac.as_ref().expect("validated graphene preset");
    let mut list = match config.preset {
        Preset::GrapheneCollision => vec![
            graphene_collision_scenario_on(GrapheneCase::Elastic, d.grid_points)?,
            graphene_collision_scenario_on(GrapheneCase::BandFlip, d.grid_points)?,
        ],
        Preset::Klein => klein_scenarios_on(d.grid_points)?.to_vec(),
        other => unreachable!("{other} is not a graphene preset"),
    };
    let dt = d.dt_fs * FS;
    for s in &mut list {
        if let Some(c) = s.collision.as_mut() {
            let t_c = c.step as f64 * s.dt;
            c.step = ((t_c / dt).round() as usize).max(1);
        }
        s.dt = dt;
        s.steps = ((d.duration_ps * PS / dt).round() as usize).max(1);
        s.trajectories = d.trajectories;
        s.sample_every = d.sample_every;
    }
    Ok(list)
}

fn run_graphene(config: &RunConfig, timings: &mut BTreeMap<String, f64>) -> Result<Product, RunError> {
    let list = scenarios(config)?;
    progress(format!("{} runs of {} steps", list.len(), list[0].steps));
    let t0 = Instant::now();
    let runs = list
        .par_iter()
        .map(|s| run_dirac(s, config.seed))
        .collect::<cwf_transport::Result<Vec<DiracRecord>>>()?;
    let elapsed = t0.elapsed().as_secs_f64();
    progress(format!("finished in {elapsed:.1} s"));
    timings.insert("propagation".into(), elapsed);

    Ok(Product {
        tables: graphene_tables(&runs),
        invariants: graphene_invariants(&runs),
        summary: graphene_summary(config.preset, &runs),
    })
}

fn graphene_tables(runs: &[DiracRecord]) -> Vec<CsvTable> {
    let mut samples = CsvTable::new(
        "dirac_samples",
        &[
            "run",
            "time_s",
            "norm",
            "centroid_x_m",
            "centroid_y_m",
            "mean_kx_per_m",
            "mean_ky_per_m",
            "p_conduction",
            "p_valence",
            "velocity_x_m_per_s",
            "velocity_y_m_per_s",
            "transmission",
        ],
    );
    let mut trajectories = CsvTable::new("trajectories", &["run", "trajectory", "time_s", "x_m", "y_m"]);
    let mut collisions = CsvTable::new(
        "collisions",
        &["run", "time_s", "mechanism", "qx_per_m", "qy_per_m", "delta_e_ev", "band_flip"],
    );
    for r in runs {
        for s in &r.samples {
            samples.push(vec![
                r.name.clone(),
                float(s.time),
                float(s.norm),
                float(s.centroid[0]),
                float(s.centroid[1]),
                float(s.mean_k[0]),
                float(s.mean_k[1]),
                float(s.p_conduction),
                float(s.p_valence),
                float(s.mean_velocity[0]),
                float(s.mean_velocity[1]),
                s.transmission.map(float).unwrap_or_default(),
            ]);
        }
        for t in &r.trajectories {
            for (time, pos) in t.history.iter().flatten() {
                trajectories.push(vec![r.name.clone(), t.id.to_string(), float(*time), float(pos[0]), float(pos[1])]);
            }
        }
        if let Some(c) = &r.collision {
            let e = &c.event;
            collisions.push(vec![
                r.name.clone(),
                float(e.time),
                e.mechanism.as_str().to_string(),
                float(e.q[0]),
                float(e.q[1]),
                float(e.delta_e_ev),
                e.band_flip.to_string(),
            ]);
        }
    }
    vec![samples, trajectories, collisions]
}

fn graphene_invariants(runs: &[DiracRecord]) -> Vec<InvariantCheck> {
    let mut grows = Vec::new();
    let mut worst: f64 = 0.0;
    for r in runs {
        for w in r.samples.windows(2) {
            let rise = w[1].norm - w[0].norm;
            worst = worst.max(rise);
            if rise > 1e-10 {
                grows.push(format!("{} at {:e} s", r.name, w[1].time));
                break;
            }
        }
    }
    let finite = runs.iter().all(|r| {
        r.samples.iter().all(|s| {
            s.norm.is_finite() && s.centroid.iter().chain(&s.mean_k).chain(&s.mean_velocity).all(|v| v.is_finite())
        })
    });
    vec![
        InvariantCheck::new(
            "norm_non_increasing",
            grows.is_empty(),
            if grows.is_empty() {
                format!("largest step-to-step norm change {worst:e}")
            } else {
                format!("norm grew: {}", grows.join(", "))
            },
        ),
        InvariantCheck::new("finite_observables", finite, "sampled observables are finite"),
    ]
}

fn graphene_summary(preset: Preset, runs: &[DiracRecord]) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for r in runs {
        let Some(s) = r.last() else { continue };
        let v_dot_k = s.mean_velocity[0] * s.mean_k[0] + s.mean_velocity[1] * s.mean_k[1];
        out.insert(
            r.name.clone(),
            json!({
                "final_p_conduction": s.p_conduction,
                "final_p_valence": s.p_valence,
                "final_velocity_dot_k": v_dot_k,
                "final_transmission": s.transmission,
                "collision_time_s": r.collision_time(),
                "collision_mechanism": r.collision.map(|c| c.event.mechanism.as_str()),
            }),
        );
    }
    if preset == Preset::Klein && runs.len() == 3 {
        let t: Vec<Option<f64>> = runs.iter().map(|r| r.final_transmission()).collect();
        if let (Some(rotated), Some(oblique)) = (t[2], t[1]) {
            out.insert("rotated_exceeds_oblique".into(), json!(rotated > oblique));
        }
    }
    serde_json::Value::Object(out)
}

/// Name of a mechanism in table order.
pub fn mechanism_columns() -> [&'static str; 4] {
    MechanismKind::ALL.map(|k| k.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_detection() {
        assert_eq!(peak_and_ndr(&[1.0, 3.0, 2.0, 4.0]), Some((3, false)));
        assert_eq!(peak_and_ndr(&[1.0, 5.0, 2.0, 4.0]), Some((1, true)));
        assert_eq!(peak_and_ndr(&[]), None);
    }

    #[test]
    fn collision_columns_follow_mechanism_order() {
        assert_eq!(
            mechanism_columns(),
            ["acoustic_elastic", "impurity_elastic", "optical_emission", "optical_absorption"]
        );
    }

    #[test]
    fn out_dir_precedence() {
        let mut c = RunConfig::defaults(Preset::Klein, 1);
        assert_eq!(resolve_out_dir(&c, None), PathBuf::from("cwfsim-out"));
        assert_eq!(resolve_out_dir(&c, Some("env")), PathBuf::from("env"));
        c.output_dir = Some("file".into());
        assert_eq!(resolve_out_dir(&c, Some("env")), PathBuf::from("file"));
    }
}
