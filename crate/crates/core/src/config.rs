//! Declarative pipeline specs, the component registry and run manifests.
//!
//! Specs are TOML tables with a `type` key naming a registry entry; every
//! other key is a parameter, and nested tables with their own `type` are
//! child specs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryParams;
use crate::fusion::CommandCenterConfig;
use crate::metrics::EvalConfig;
use crate::scenario::ScenarioConfig;
use crate::sim::{ChannelConfig, SimConfig};
use crate::tracking::TrackerConfig;

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("{path}: unknown component type `{key}`{}", nearest.as_ref().map(|n| format!(" (did you mean `{n}`?)")).unwrap_or_default())]
    UnknownType { path: String, key: String, nearest: Option<String> },
    #[error("{path}: {message}")]
    Param { path: String, message: String },
    #[error("{path}: expected a {expected} component, found `{found}`")]
    WrongKind { path: String, expected: &'static str, found: String },
    #[error("component type `{0}` is already registered")]
    Duplicate(String),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse manifest: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize manifest: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// A registry key plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

impl ComponentSpec {
    pub fn new(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), params: toml::Table::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_child(self, key: &str, child: ComponentSpec) -> Self {
        let value = toml::Value::try_from(&child).expect("component specs serialize to tables");
        self.with(key, value)
    }
}

/// A constructed component.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    CommandCenter(CommandCenterConfig<f64>),
    CommandCenterPipeline { assign_radius: f64, tracker: TrackerConfig<f64> },
    Clusterer { assign_radius: f64 },
    CovarianceIntersection,
    GroupTracker { tracker: TrackerConfig<f64> },
    Tracker(TrackerConfig<f64>),
    AgentPipeline(TrackerConfig<f64>),
}

impl Component {
    fn kind(&self) -> &'static str {
        match self {
            Component::CommandCenter(_) => "command center",
            Component::CommandCenterPipeline { .. } => "command-center pipeline",
            Component::Clusterer { .. } => "clusterer",
            Component::CovarianceIntersection => "fusion",
            Component::GroupTracker { .. } => "group tracker",
            Component::Tracker(_) => "tracker",
            Component::AgentPipeline(_) => "agent pipeline",
        }
    }
}

pub type Constructor = fn(&Registry, &ComponentSpec, &str) -> Result<Component, BuildError>;

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Constructor>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every built-in component.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        let builtins: [(&str, Constructor); 7] = [
            ("CommandCenter", build_command_center),
            ("CommandCenterPipeline", build_cc_pipeline),
            ("SampledAssignmentClusterer", build_clusterer),
            ("GroupTrackerWrapper", build_group_tracker),
            ("CovarianceIntersectionFusion", build_ci),
            ("KalmanBoxTracker3D", build_tracker),
            ("AgentPipeline", build_agent_pipeline),
        ];
        for (k, c) in builtins {
            r.register(k, c).expect("built-in keys are unique");
        }
        r
    }

    pub fn register(&mut self, key: &str, ctor: Constructor) -> Result<(), BuildError> {
        if self.entries.contains_key(key) {
            return Err(BuildError::Duplicate(key.to_string()));
        }
        self.entries.insert(key.to_string(), ctor);
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// The registered key closest to `key` by edit distance.
    pub fn nearest(&self, key: &str) -> Option<String> {
        self.keys().min_by_key(|k| strsim::levenshtein(k, key)).map(str::to_string)
    }

    pub fn build(&self, spec: &ComponentSpec) -> Result<Component, BuildError> {
        self.build_at(spec, &spec.kind)
    }

    fn build_at(&self, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
        match self.entries.get(&spec.kind) {
            Some(ctor) => ctor(self, spec, path),
            None => Err(BuildError::UnknownType {
                path: path.to_string(),
                key: spec.kind.clone(),
                nearest: self.nearest(&spec.kind),
            }),
        }
    }

    fn child(&self, params: &mut toml::Table, key: &str, path: &str) -> Result<Option<Component>, BuildError> {
        let path = format!("{path}.{key}");
        let Some(value) = params.remove(key) else { return Ok(None) };
        let spec: ComponentSpec = value
            .try_into()
            .map_err(|e: toml::de::Error| BuildError::Param { path: path.clone(), message: e.message().to_string() })?;
        self.build_at(&spec, &path).map(Some)
    }
}

fn params<T: DeserializeOwned>(table: toml::Table, path: &str) -> Result<T, BuildError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| BuildError::Param { path: path.to_string(), message: e.message().to_string() })
}

fn wrong(path: &str, expected: &'static str, found: &Component) -> BuildError {
    BuildError::WrongKind { path: path.to_string(), expected, found: found.kind().to_string() }
}

fn invalid(path: &str, message: String) -> BuildError {
    BuildError::Param { path: path.to_string(), message }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrackerParams {
    gate_distance: f64,
    confirm_hits: u32,
    delete_misses: u32,
    process_noise_std: f64,
    init_velocity_std: f64,
}

impl From<TrackerConfig<f64>> for TrackerParams {
    fn from(c: TrackerConfig<f64>) -> Self {
        Self {
            gate_distance: c.gate_distance,
            confirm_hits: c.confirm_hits,
            delete_misses: c.delete_misses,
            process_noise_std: c.process_noise_std,
            init_velocity_std: c.init_velocity_std,
        }
    }
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerConfig::default().into()
    }
}

fn build_tracker(_: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let p: TrackerParams = params(spec.params.clone(), path)?;
    let c = TrackerConfig {
        gate_distance: p.gate_distance,
        confirm_hits: p.confirm_hits,
        delete_misses: p.delete_misses,
        process_noise_std: p.process_noise_std,
        init_velocity_std: p.init_velocity_std,
    };
    c.validate().map_err(|m| invalid(path, m))?;
    Ok(Component::Tracker(c))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

fn build_ci(_: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let _: Empty = params(spec.params.clone(), path)?;
    Ok(Component::CovarianceIntersection)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClustererParams {
    assign_radius: f64,
}

fn build_clusterer(_: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let p: ClustererParams = params(spec.params.clone(), path)?;
    if !(p.assign_radius > 0.0) {
        return Err(invalid(path, "assign_radius must be > 0".into()));
    }
    Ok(Component::Clusterer { assign_radius: p.assign_radius })
}

fn build_group_tracker(reg: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let mut rest = spec.params.clone();
    match reg.child(&mut rest, "fusion", path)? {
        Some(Component::CovarianceIntersection) | None => {}
        Some(other) => return Err(wrong(&format!("{path}.fusion"), "fusion", &other)),
    }
    let tracker = match reg.child(&mut rest, "tracker", path)? {
        Some(Component::Tracker(t)) => t,
        None => TrackerConfig::command_center(),
        Some(other) => return Err(wrong(&format!("{path}.tracker"), "tracker", &other)),
    };
    let _: Empty = params(rest, path)?;
    Ok(Component::GroupTracker { tracker })
}

fn build_cc_pipeline(reg: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let mut rest = spec.params.clone();
    let defaults = CommandCenterConfig::<f64>::default();
    let assign_radius = match reg.child(&mut rest, "clustering", path)? {
        Some(Component::Clusterer { assign_radius }) => assign_radius,
        None => defaults.assign_radius,
        Some(other) => return Err(wrong(&format!("{path}.clustering"), "clusterer", &other)),
    };
    let tracker = match reg.child(&mut rest, "group_tracking", path)? {
        Some(Component::GroupTracker { tracker }) => tracker,
        None => defaults.tracker,
        Some(other) => return Err(wrong(&format!("{path}.group_tracking"), "group tracker", &other)),
    };
    let _: Empty = params(rest, path)?;
    Ok(Component::CommandCenterPipeline { assign_radius, tracker })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CommandCenterParams {
    latency_factor: f64,
    staleness_window: f64,
    queue_capacity: usize,
}

impl Default for CommandCenterParams {
    fn default() -> Self {
        let d = CommandCenterConfig::<f64>::default();
        Self { latency_factor: d.latency_factor, staleness_window: d.staleness_window, queue_capacity: d.queue_capacity }
    }
}

fn build_command_center(reg: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let mut rest = spec.params.clone();
    let defaults = CommandCenterConfig::<f64>::default();
    let (assign_radius, tracker) = match reg.child(&mut rest, "pipeline", path)? {
        Some(Component::CommandCenterPipeline { assign_radius, tracker }) => (assign_radius, tracker),
        None => (defaults.assign_radius, defaults.tracker),
        Some(other) => return Err(wrong(&format!("{path}.pipeline"), "command-center pipeline", &other)),
    };
    let p: CommandCenterParams = params(rest, path)?;
    let c = CommandCenterConfig {
        latency_factor: p.latency_factor,
        assign_radius,
        tracker,
        staleness_window: p.staleness_window,
        queue_capacity: p.queue_capacity,
    };
    c.validate().map_err(|m| invalid(path, m))?;
    Ok(Component::CommandCenter(c))
}

fn build_agent_pipeline(reg: &Registry, spec: &ComponentSpec, path: &str) -> Result<Component, BuildError> {
    let mut rest = spec.params.clone();
    let tracker = match reg.child(&mut rest, "tracker", path)? {
        Some(Component::Tracker(t)) => t,
        None => TrackerConfig::default(),
        Some(other) => return Err(wrong(&format!("{path}.tracker"), "tracker", &other)),
    };
    let _: Empty = params(rest, path)?;
    Ok(Component::AgentPipeline(tracker))
}

/// The default command-center spec, nested as clusterer, CI fusion and box tracker.
pub fn default_command_center_spec() -> ComponentSpec {
    ComponentSpec::new("CommandCenter").with_child(
        "pipeline",
        ComponentSpec::new("CommandCenterPipeline")
            .with_child("clustering", ComponentSpec::new("SampledAssignmentClusterer").with("assign_radius", 2.0))
            .with_child(
                "group_tracking",
                ComponentSpec::new("GroupTrackerWrapper")
                    .with_child("fusion", ComponentSpec::new("CovarianceIntersectionFusion"))
                    .with_child("tracker", ComponentSpec::new("KalmanBoxTracker3D").with("confirm_hits", 2i64)),
            ),
    )
}

pub fn default_agent_spec() -> ComponentSpec {
    ComponentSpec::new("AgentPipeline").with_child("tracker", ComponentSpec::new("KalmanBoxTracker3D"))
}

/// Everything needed to launch one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Delay between a frame and the command-center cycle that consumes it.
    #[serde(default = "default_cycle_delay")]
    pub cycle_delay: f64,
    #[serde(default)]
    pub randomize_compromised: bool,
    /// Frames rendered as images after a run.
    #[serde(default)]
    pub snapshot_frames: Vec<usize>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub adversary: AdversaryParams,
    #[serde(default)]
    pub channels: ChannelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_agent_spec")]
    pub agent_pipeline: ComponentSpec,
    #[serde(default = "default_command_center_spec")]
    pub command_center: ComponentSpec,
}

fn default_cycle_delay() -> f64 {
    SimConfig::default().cycle_delay
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            cycle_delay: default_cycle_delay(),
            randomize_compromised: false,
            snapshot_frames: Vec::new(),
            scenario: ScenarioConfig::default(),
            adversary: AdversaryParams::default(),
            channels: ChannelConfig::default(),
            eval: EvalConfig::default(),
            agent_pipeline: default_agent_spec(),
            command_center: default_command_center_spec(),
        }
    }
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self, ManifestError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ManifestError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, ManifestError> {
        Ok(toml::to_string(self)?)
    }

    /// Builds every spec and checks the result is runnable.
    pub fn sim_config(&self, registry: &Registry) -> Result<SimConfig, ManifestError> {
        let agent_tracker = match registry.build_at(&self.agent_pipeline, "agent_pipeline")? {
            Component::AgentPipeline(t) => t,
            other => return Err(wrong("agent_pipeline", "agent pipeline", &other).into()),
        };
        let command_center = match registry.build_at(&self.command_center, "command_center")? {
            Component::CommandCenter(c) => c,
            other => return Err(wrong("command_center", "command center", &other).into()),
        };
        let config = SimConfig {
            seed: self.seed,
            scenario: self.scenario.clone(),
            agent_tracker,
            command_center,
            adversary: self.adversary.clone(),
            channels: self.channels,
            cycle_delay: self.cycle_delay,
            record_events: true,
            debug_cc: false,
            randomize_compromised: self.randomize_compromised,
        };
        config.validate().map_err(|e| ManifestError::Invalid(e.to_string()))?;
        Ok(config)
    }
}
