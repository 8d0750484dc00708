//! Scenario files: topology, AQM, integration grid and observer settings in
//! one TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{Objective, StateScaling, SynthesisOptions, DEFAULT_EPSILON};
use crate::plant::{AqmPolicy, PlantInitial};
use crate::topology::{validate_config, ConfigError, NetworkConfig, ValidatedConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    pub horizon: f64,
    pub step: f64,
    /// Spacing of the rows written to the trace CSV; defaults to every 10 ms.
    #[serde(default)]
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverOptions {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Alarm threshold on `|d̂|` in packets/s; 5% of capacity when absent.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_hold")]
    pub hold: f64,
    /// Use this gain instead of synthesising one.
    #[serde(default)]
    pub gain: Option<Vec<f64>>,
    #[serde(default)]
    pub decay_rate: f64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub scaling: StateScaling,
    #[serde(default)]
    pub initial: Vec<f64>,
    #[serde(default)]
    pub quantize: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_hold() -> f64 {
    1.0
}

impl Default for ObserverOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            threshold: None,
            hold: 1.0,
            gain: None,
            decay_rate: 0.0,
            objective: Objective::Feasibility,
            scaling: StateScaling::None,
            initial: Vec::new(),
            quantize: false,
        }
    }
}

impl ObserverOptions {
    pub fn synthesis(&self) -> SynthesisOptions {
        SynthesisOptions {
            epsilon: self.epsilon,
            decay_rate: self.decay_rate,
            objective: self.objective.clone(),
            scaling: self.scaling.clone(),
            ..SynthesisOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub network: NetworkConfig,
    pub aqm: AqmPolicy,
    pub integration: Integration,
    #[serde(default)]
    pub initial: PlantInitial,
    #[serde(default)]
    pub observer: ObserverOptions,
    /// Relative paths resolve against the scenario file's directory.
    pub output_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("network: {0}")]
    Network(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

/// A scenario whose network passed validation.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub network: ValidatedConfig,
    /// Directory relative output paths resolve against.
    pub base_dir: PathBuf,
}

impl LoadedScenario {
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.scenario.output_dir)
    }

    pub fn threshold(&self) -> f64 {
        self.scenario
            .observer
            .threshold
            .unwrap_or(0.05 * self.network.capacity)
    }

    pub fn sample_interval(&self) -> f64 {
        self.scenario.integration.sample_interval.unwrap_or(0.01)
    }
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

pub fn check_scenario(scenario: Scenario, base_dir: PathBuf) -> Result<LoadedScenario, ScenarioError> {
    if scenario.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Schema(scenario.schema_version));
    }
    let network = validate_config(scenario.network.clone())?;
    let integ = &scenario.integration;
    if !(integ.horizon.is_finite() && integ.horizon > 0.0) {
        return Err(ScenarioError::Invalid(format!("horizon must be positive (got {})", integ.horizon)));
    }
    let min_delay = network
        .sources
        .iter()
        .flat_map(|s| {
            let queueing = network.queue_target / network.capacity;
            [s.fwd_prop, s.bwd_prop + queueing]
        })
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(integ.step > 0.0 && integ.step <= min_delay / 10.0) {
        return Err(ScenarioError::Invalid(format!(
            "step {} must be positive and at most a tenth of the smallest delay {min_delay}",
            integ.step
        )));
    }
    if let Some(s) = integ.sample_interval {
        if !(s >= integ.step) {
            return Err(ScenarioError::Invalid("sample_interval must be at least the step".into()));
        }
    }
    let obs = &scenario.observer;
    if !(obs.epsilon > 0.0) {
        return Err(ScenarioError::Invalid("observer epsilon must be positive".into()));
    }
    if let Some(t) = obs.threshold {
        if !(t > 0.0) {
            return Err(ScenarioError::Invalid("alarm threshold must be positive".into()));
        }
    }
    if !(obs.hold >= 0.0) {
        return Err(ScenarioError::Invalid("hold must be non-negative".into()));
    }
    if !(obs.decay_rate >= 0.0) {
        return Err(ScenarioError::Invalid("decay_rate must be non-negative".into()));
    }
    let dim = network.num_sources() + 2;
    if let Some(g) = &obs.gain {
        if g.len() != dim {
            return Err(ScenarioError::Invalid(format!("gain needs {dim} entries, got {}", g.len())));
        }
    }
    if !obs.initial.is_empty() && obs.initial.len() != dim {
        return Err(ScenarioError::Invalid(format!(
            "observer initial state needs {dim} entries, got {}",
            obs.initial.len()
        )));
    }
    let n = network.num_sources();
    if !scenario.initial.rate_offsets.is_empty() && scenario.initial.rate_offsets.len() != n {
        return Err(ScenarioError::Invalid(format!("rate_offsets needs {n} entries")));
    }
    Ok(LoadedScenario {
        scenario,
        network,
        base_dir,
    })
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = parse_scenario(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    check_scenario(scenario, base)
}
