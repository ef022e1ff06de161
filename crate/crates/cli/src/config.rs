//! Run configuration.
//!
//! A config document is TOML. Keys the user gives are laid over the defaults
//! of the chosen preset, and each resolved key remembers where it came from.
//!
//! ```toml
//! preset = "rtd_iv"
//! seed = 42
//!
//! [simulation]
//! duration_ps = 2.0
//!
//! [sweep]
//! biases_v = [0.2, 0.4]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use cwf_transport::device::{DeviceSpec, SimulationParams};
use cwf_transport::scattering::{gaas_default_mechanisms, Mechanism};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Preset {
    /// Resonant-tunneling-diode I-V sweep, ballistic and dissipative.
    RtdIv,
    /// Forced graphene collisions: elastic deflection and band flip.
    GrapheneCollision,
    /// Klein tunneling through a graphene barrier.
    Klein,
    /// I-V sweep of a user-described device.
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::RtdIv => "rtd_iv",
            Preset::GrapheneCollision => "graphene_collision",
            Preset::Klein => "klein",
            Preset::Custom => "custom",
        }
    }

    pub fn is_device(self) -> bool {
        matches!(self, Preset::RtdIv | Preset::Custom)
    }

    fn sections(self) -> &'static [&'static str] {
        if self.is_device() {
            &["device", "simulation", "mechanisms", "sweep"]
        } else {
            &["dirac"]
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bias points of a device sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub biases_v: Vec<f64>,
    /// Also run the sweep without collisions, with the same seed.
    pub ballistic_reference: bool,
}

/// Numerical settings of the graphene presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracConfig {
    pub grid_points: [usize; 2],
    pub dt_fs: f64,
    pub duration_ps: f64,
    pub trajectories: usize,
    /// Observables are sampled every this many steps.
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanisms: Option<Vec<Mechanism>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirac: Option<DiracConfig>,
}

impl RunConfig {
    pub fn defaults(preset: Preset, seed: u64) -> Self {
        let mut config = RunConfig {
            preset,
            seed,
            output_dir: None,
            device: None,
            simulation: None,
            mechanisms: None,
            sweep: None,
            dirac: None,
        };
        match preset {
            Preset::RtdIv | Preset::Custom => {
                let device = DeviceSpec::rtd();
                config.mechanisms = Some(gaas_default_mechanisms(device.temperature_k));
                config.device = Some(device);
                config.simulation = Some(SimulationParams {
                    electron_cap: 200,
                    ..SimulationParams::default()
                });
                config.sweep = Some(SweepConfig {
                    biases_v: (1..=8).map(|i| 0.1 * i as f64).collect(),
                    ballistic_reference: preset == Preset::RtdIv,
                });
            }
            Preset::GrapheneCollision => {
                config.dirac = Some(DiracConfig {
                    grid_points: [256, 256],
                    dt_fs: 1.0,
                    duration_ps: 0.3,
                    trajectories: 16,
                    sample_every: 10,
                });
            }
            Preset::Klein => {
                config.dirac = Some(DiracConfig {
                    grid_points: [512, 128],
                    dt_fs: 0.5,
                    duration_ps: 0.8,
                    trajectories: 16,
                    sample_every: 20,
                });
            }
        }
        config
    }

    /// No scattering channel is configured.
    pub fn ballistic(&self) -> Option<bool> {
        self.mechanisms.as_ref().map(|m| m.iter().all(|m| m.rate == 0.0))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("a run config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for &section in Preset::ALL_SECTIONS {
            let present = match section {
                "device" => self.device.is_some(),
                "simulation" => self.simulation.is_some(),
                "mechanisms" => self.mechanisms.is_some(),
                "sweep" => self.sweep.is_some(),
                _ => self.dirac.is_some(),
            };
            if present != self.preset.sections().contains(&section) {
                return Err(ConfigError::invalid(
                    section,
                    if present {
                        format!("not used by preset {}", self.preset)
                    } else {
                        format!("required by preset {}", self.preset)
                    },
                ));
            }
        }
        if let Some(d) = &self.device {
            d.validate().map_err(|e| from_core("device", e))?;
        }
        if let Some(s) = &self.simulation {
            s.validate().map_err(|e| from_core("simulation", e))?;
            if let Some(d) = &self.device {
                cwf_transport::device::Layout::new(d, s).map_err(|e| from_core("simulation", e))?;
            }
        }
        for (i, m) in self.mechanisms.iter().flatten().enumerate() {
            m.validate().map_err(|e| from_core(&format!("mechanisms[{i}]"), e))?;
        }
        if let Some(s) = &self.sweep {
            if s.biases_v.is_empty() {
                return Err(ConfigError::invalid("sweep.biases_v", "at least one bias is required"));
            }
            if let Some(i) = s.biases_v.iter().position(|v| !v.is_finite()) {
                return Err(ConfigError::invalid(format!("sweep.biases_v[{i}]"), "must be finite"));
            }
        }
        if let Some(d) = &self.dirac {
            for (key, v) in [("dirac.dt_fs", d.dt_fs), ("dirac.duration_ps", d.duration_ps)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::invalid(key, "must be positive"));
                }
            }
            if d.duration_ps * 1e3 < d.dt_fs {
                return Err(ConfigError::invalid("dirac.duration_ps", "shorter than one time step"));
            }
            for (i, &n) in d.grid_points.iter().enumerate() {
                cwf_transport::field::Grid1D::new(1.0, n)
                    .map_err(|e| ConfigError::invalid(format!("dirac.grid_points[{i}]"), e.to_string()))?;
            }
            if d.trajectories == 0 {
                return Err(ConfigError::invalid("dirac.trajectories", "must be at least 1"));
            }
            if d.sample_every == 0 {
                return Err(ConfigError::invalid("dirac.sample_every", "must be at least 1"));
            }
        }
        Ok(())
    }
}

impl Preset {
    const ALL_SECTIONS: &'static [&'static str] = &["device", "simulation", "mechanisms", "sweep", "dirac"];
}

fn from_core(section: &str, e: cwf_transport::Error) -> ConfigError {
    match e {
        cwf_transport::Error::InvalidParameter { name, reason } => {
            ConfigError::invalid(format!("{section}.{name}"), reason)
        }
        other => ConfigError::invalid(section, other.to_string()),
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("unknown key `{path}`")]
    UnknownKey { path: String },
    #[error("invalid value for `{path}`: {reason}")]
    Invalid { path: String, reason: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// The dotted key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Malformed(_) => None,
            ConfigError::Missing(k) => Some(k),
            ConfigError::UnknownKey { path } | ConfigError::Invalid { path, .. } => Some(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    User,
    CommandLine,
}

/// Values given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    /// Origin of every leaf key of the resolved config, by dotted path.
    pub provenance: BTreeMap<String, Source>,
}

pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ResolvedConfig, ConfigError> {
    let mut user: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Malformed(e.to_string()))?;
    let mut from_cli = Vec::new();
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed).map_err(|_| ConfigError::invalid("seed", "must be below 2^63"))?;
        user.insert("seed".into(), Value::Integer(seed));
        from_cli.push("seed".to_string());
    }
    if let Some(preset) = overrides.preset {
        user.insert("preset".into(), Value::String(preset.as_str().into()));
        from_cli.push("preset".to_string());
    }
    if let Some(dir) = &overrides.output_dir {
        user.insert("output_dir".into(), Value::String(dir.display().to_string()));
        from_cli.push("output_dir".to_string());
    }

    let preset = match user.get("preset") {
        None => return Err(ConfigError::Missing("preset")),
        Some(v) => Preset::deserialize(v.clone()).map_err(|e| ConfigError::invalid("preset", e.to_string()))?,
    };
    match user.get("seed") {
        None => return Err(ConfigError::Missing("seed")),
        Some(Value::Integer(s)) if *s < 0 => return Err(ConfigError::invalid("seed", "must be non-negative")),
        Some(_) => {}
    }
    for key in user.keys() {
        if Preset::ALL_SECTIONS.contains(&key.as_str()) && !preset.sections().contains(&key.as_str()) {
            return Err(ConfigError::invalid(key.clone(), format!("not used by preset {preset}")));
        }
    }

    let mut merged = Table::try_from(RunConfig::defaults(preset, 0)).expect("defaults serialize");
    merge(&mut merged, &user);
    let config: RunConfig = serde_path_to_error::deserialize(Value::Table(merged)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        match inner.strip_prefix("unknown field `") {
            Some(rest) => {
                let field = rest.split('`').next().unwrap_or_default();
                let path = if path == "." || path.is_empty() {
                    field.to_string()
                } else if path.ends_with(field) {
                    path
                } else {
                    format!("{path}.{field}")
                };
                ConfigError::UnknownKey { path }
            }
            None => ConfigError::invalid(path, inner),
        }
    })?;
    config.validate()?;

    let mut given = BTreeMap::new();
    leaves(&Value::Table(user), String::new(), &mut |path, _| {
        let source = if from_cli.contains(&path) { Source::CommandLine } else { Source::User };
        given.insert(path, source);
    });
    let mut provenance = BTreeMap::new();
    let resolved = Value::try_from(&config).expect("config serializes");
    leaves(&resolved, String::new(), &mut |path, _| {
        let source = given.get(&path).copied().unwrap_or(Source::Default);
        provenance.insert(path, source);
    });
    Ok(ResolvedConfig { config, provenance })
}

/// Lay `over` on top of `base`; tables merge key by key, anything else replaces.
fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Visit every non-table value; arrays count as single values.
fn leaves(value: &Value, path: String, visit: &mut impl FnMut(String, &Value)) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                leaves(v, p, visit);
            }
        }
        other => visit(path, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_rtd_document_takes_preset_defaults() {
        let r = parse_config("preset = \"rtd_iv\"\nseed = 42\n").unwrap();
        let c = &r.config;
        assert_eq!(c.seed, 42);
        let device = c.device.as_ref().unwrap();
        assert_eq!(device.max_band_offset_ev(), 0.5);
        let sim = c.simulation.as_ref().unwrap();
        assert_eq!(sim.packet_sigma_nm, 40.0);
        assert_eq!(sim.duration_ps, 5.0);
        assert_eq!(r.provenance["seed"], Source::User);
        assert_eq!(r.provenance["simulation.dt_fs"], Source::Default);
    }

    #[test]
    fn overrides_win_and_are_marked() {
        let o = Overrides {
            seed: Some(7),
            ..Overrides::default()
        };
        let r = parse_config_with("preset = \"klein\"\nseed = 1\n", &o).unwrap();
        assert_eq!(r.config.seed, 7);
        assert_eq!(r.provenance["seed"], Source::CommandLine);
        assert_eq!(r.provenance["dirac.dt_fs"], Source::Default);
    }

    #[test]
    fn nested_override_keeps_sibling_defaults() {
        let r = parse_config("preset = \"rtd_iv\"\nseed = 1\n[simulation]\nduration_ps = 0.5\n").unwrap();
        let sim = r.config.simulation.unwrap();
        assert_eq!(sim.duration_ps, 0.5);
        assert_eq!(sim.dt_fs, SimulationParams::default().dt_fs);
        assert_eq!(r.provenance["simulation.duration_ps"], Source::User);
    }
}
