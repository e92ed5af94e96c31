//! Synthetic multi-agent scenes: ground-truth trajectories, agent placement,
//! and a noisy detection model with field of view, range, occlusion, misses
//! and clutter.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::io::{BufRead, Write};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, AgentId, Covariance, FrameId, ObjectState, Pose};
use crate::rng::{poisson_count, stream, Domain, StreamRng};
use crate::tracking::Detection;

/// Observers mounted above this height ignore ground-level occlusion.
pub const OCCLUSION_EXEMPT_HEIGHT: f64 = 5.0;

/// Standard passenger-car box (length, width, height).
pub const CAR_EXTENT: [f64; 3] = [4.5, 1.9, 1.6];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("malformed frame log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub max_range: f64,
    pub azimuth_fov: f64,
    pub detection_prob: f64,
    /// Per-axis standard deviation (m).
    pub position_noise_std: f64,
    /// Expected false detections per frame.
    pub clutter_rate: f64,
    pub occlusion_enabled: bool,
}

impl SensorModel {
    /// Roof-mounted spinning lidar.
    pub fn ego() -> Self {
        Self {
            max_range: 40.0,
            azimuth_fov: TAU,
            detection_prob: 0.9,
            position_noise_std: 0.2,
            clutter_rate: 0.5,
            occlusion_enabled: true,
        }
    }

    /// Pole-mounted lidar with a 90° wedge.
    pub fn infrastructure() -> Self {
        Self {
            max_range: 120.0,
            azimuth_fov: FRAC_PI_2,
            detection_prob: 0.9,
            position_noise_std: 0.2,
            clutter_rate: 0.5,
            occlusion_enabled: true,
        }
    }

    /// Perfect sensing inside the same geometry.
    pub fn noiseless(self) -> Self {
        Self { detection_prob: 1.0, position_noise_std: 0.0, clutter_rate: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: &str| Err(ScenarioError::Config(m.to_owned()));
        if !(self.max_range > 0.0) {
            return err("max_range must be > 0");
        }
        if !(self.azimuth_fov > 0.0 && self.azimuth_fov <= TAU + 1e-12) {
            return err("azimuth_fov must be in (0, 2π]");
        }
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return err("detection_prob must be in [0, 1]");
        }
        if !(self.position_noise_std >= 0.0) {
            return err("position_noise_std must be >= 0");
        }
        if !(self.clutter_rate >= 0.0) {
            return err("clutter_rate must be >= 0");
        }
        Ok(())
    }

    fn measurement_noise(&self) -> Covariance<f64> {
        // Keep the covariance invertible for noiseless sensors.
        let var = (self.position_noise_std * self.position_noise_std).max(1e-4);
        Covariance::isotropic(3, var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub frame_rate: f64,
    pub n_infrastructure: usize,
    /// Closed loop of (x, y) waypoints followed by the ego.
    pub ego_trajectory: Vec<[f64; 2]>,
    pub ego_speed: f64,
    pub ego_sensor_height: f64,
    pub object_count: usize,
    pub object_speed_range: [f64; 2],
    /// Objects roam inside `[-map_extent, map_extent]²`.
    pub map_extent: f64,
    pub infra_elevation: f64,
    /// Radians; negative looks down.
    pub infra_pitch: f64,
    /// Corner offset of infrastructure poles from the origin.
    pub infra_offset: f64,
    pub ego_sensor: SensorModel,
    pub infra_sensor: SensorModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 30.0,
            frame_rate: 10.0,
            n_infrastructure: 4,
            ego_trajectory: vec![[-25.0, -25.0], [25.0, -25.0], [25.0, 25.0], [-25.0, 25.0]],
            ego_speed: 5.0,
            ego_sensor_height: 1.8,
            object_count: 20,
            object_speed_range: [2.0, 8.0],
            map_extent: 50.0,
            infra_elevation: 15.0,
            infra_pitch: -PI / 6.0,
            infra_offset: 30.0,
            ego_sensor: SensorModel::ego(),
            infra_sensor: SensorModel::infrastructure(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: &str| Err(ScenarioError::Config(m.to_owned()));
        if !(self.frame_rate > 0.0) {
            return err("frame_rate must be > 0");
        }
        if !(self.duration > 0.0) {
            return err("duration must be > 0");
        }
        if self.ego_trajectory.is_empty() {
            return err("ego_trajectory needs at least one waypoint");
        }
        if !(self.ego_speed >= 0.0) {
            return err("ego_speed must be >= 0");
        }
        let [lo, hi] = self.object_speed_range;
        if !(lo >= 0.0 && hi >= lo) {
            return err("object_speed_range must satisfy 0 <= lo <= hi");
        }
        if !(self.map_extent > 0.0) {
            return err("map_extent must be > 0");
        }
        self.ego_sensor.validate()?;
        self.infra_sensor.validate()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ego,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub kind: AgentKind,
    pub sensor: SensorModel,
    /// Fixed frame the agent tracks in: its levelled pose at time zero.
    pub tracking_pose: Pose<f64>,
}

impl AgentSpec {
    pub fn tracking_frame(&self) -> FrameId {
        FrameId::agent(self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub id: u64,
    pub state: ObjectState<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub index: usize,
    pub timestamp: f64,
    /// World frame.
    pub objects: Vec<TruthObject>,
    /// Sensor pose of every agent in the world frame.
    pub agent_poses: BTreeMap<AgentId, Pose<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub agents: Vec<AgentSpec>,
    pub frames: Vec<GroundTruthFrame>,
}

pub const EGO_ID: AgentId = AgentId(0);

impl Scenario {
    pub fn agent(&self, id: AgentId) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Replaces generated truth with an imported frame log.
    pub fn with_frames(config: ScenarioConfig, frames: Vec<GroundTruthFrame>) -> Result<Self, ScenarioError> {
        config.validate()?;
        let agents = build_agents(&config);
        for f in &frames {
            for a in &agents {
                if !f.agent_poses.contains_key(&a.id) {
                    return Err(ScenarioError::Config(format!("frame {} has no pose for agent {}", f.index, a.id)));
                }
            }
        }
        Ok(Self { config, agents, frames })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ScenarioError> {
        for f in &self.frames {
            serde_json::to_writer(&mut w, f).map_err(|e| ScenarioError::Io(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| ScenarioError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<GroundTruthFrame>, ScenarioError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| ScenarioError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = serde_json::from_str(&line)
            .map_err(|e| ScenarioError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(f);
    }
    Ok(out)
}

fn sensor_frame(id: AgentId) -> FrameId {
    FrameId::sensor(id)
}

/// Levelled tracking pose and pitched sensor pose of an infrastructure pole.
fn infra_pose(cfg: &ScenarioConfig, id: AgentId, corner: usize) -> (Pose<f64>, Pose<f64>) {
    let signs = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    // Extra poles beyond four sit on a wider ring.
    let ring = 1.0 + (corner / 4) as f64 * 0.25;
    let (sx, sy) = signs[corner % 4];
    let xy = Vector2::new(sx, sy) * cfg.infra_offset * ring;
    let yaw = facing_centre(xy);
    let position = Vector3::new(xy.x, xy.y, cfg.infra_elevation);
    let level = Pose::new(FrameId::world(), FrameId::agent(id), position, yaw, 0.0, 0.0, 0.0);
    let sensor = Pose::new(FrameId::world(), sensor_frame(id), position, yaw, cfg.infra_pitch, 0.0, 0.0);
    (level, sensor)
}

/// Position and heading along the closed ego loop at time `t`.
fn ego_position(cfg: &ScenarioConfig, t: f64) -> (Vector2<f64>, f64) {
    let wps: Vec<Vector2<f64>> = cfg.ego_trajectory.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    if wps.len() == 1 {
        return (wps[0], 0.0);
    }
    let seg = |i: usize| (wps[i], wps[(i + 1) % wps.len()]);
    let perimeter: f64 = (0..wps.len()).map(|i| (seg(i).1 - seg(i).0).norm()).sum();
    if perimeter <= 0.0 {
        return (wps[0], 0.0);
    }
    let mut s = (cfg.ego_speed * t) % perimeter;
    for i in 0..wps.len() {
        let (a, b) = seg(i);
        let len = (b - a).norm();
        if s <= len && len > 0.0 {
            let d = (b - a) / len;
            return (a + d * s, d.y.atan2(d.x));
        }
        s -= len;
    }
    let (a, b) = seg(wps.len() - 1);
    let d = (b - a).normalize();
    (b, d.y.atan2(d.x))
}

fn ego_sensor_pose(cfg: &ScenarioConfig, t: f64) -> Pose<f64> {
    let (xy, yaw) = ego_position(cfg, t);
    Pose::new(
        FrameId::world(),
        sensor_frame(EGO_ID),
        Vector3::new(xy.x, xy.y, cfg.ego_sensor_height),
        yaw,
        0.0,
        0.0,
        t,
    )
}

fn build_agents(cfg: &ScenarioConfig) -> Vec<AgentSpec> {
    let ego0 = ego_sensor_pose(cfg, 0.0);
    let mut agents = vec![AgentSpec {
        id: EGO_ID,
        kind: AgentKind::Ego,
        sensor: cfg.ego_sensor,
        tracking_pose: Pose { frame: FrameId::agent(EGO_ID), ..ego0 },
    }];
    for k in 0..cfg.n_infrastructure {
        let id = AgentId(k as u32 + 1);
        let (level, _) = infra_pose(cfg, id, k);
        agents.push(AgentSpec { id, kind: AgentKind::Infrastructure, sensor: cfg.infra_sensor, tracking_pose: level });
    }
    agents
}

/// Object walking between random waypoints at a fixed speed.
struct Walker {
    rng: StreamRng,
    pos: Vector2<f64>,
    target: Vector2<f64>,
    speed: f64,
    extent: f64,
}

impl Walker {
    fn new(cfg: &ScenarioConfig, index: u64) -> Self {
        let mut rng = stream(cfg.seed, Domain::Scenario, index, 0);
        let e = cfg.map_extent;
        let pos = Vector2::new(rng.random_range(-e..=e), rng.random_range(-e..=e));
        let [lo, hi] = cfg.object_speed_range;
        let speed = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let target = Vector2::new(rng.random_range(-e..=e), rng.random_range(-e..=e));
        Self { rng, pos, target, speed, extent: e }
    }

    fn heading(&self) -> Vector2<f64> {
        let d = self.target - self.pos;
        let n = d.norm();
        if n > 1e-9 {
            d / n
        } else {
            Vector2::new(1.0, 0.0)
        }
    }

    fn advance(&mut self, dt: f64) {
        let mut left = self.speed * dt;
        for _ in 0..64 {
            let d = self.target - self.pos;
            let n = d.norm();
            if n > left {
                self.pos += d / n * left;
                return;
            }
            self.pos = self.target;
            left -= n;
            let e = self.extent;
            self.target = Vector2::new(self.rng.random_range(-e..=e), self.rng.random_range(-e..=e));
        }
    }

    fn state(&self, t: f64) -> ObjectState<f64> {
        let h = self.heading();
        ObjectState {
            position: Vector3::new(self.pos.x, self.pos.y, CAR_EXTENT[2] / 2.0),
            velocity: Vector3::new(h.x, h.y, 0.0) * self.speed,
            extent: Vector3::from(CAR_EXTENT),
            yaw: normalize_angle(h.y.atan2(h.x)),
            frame: FrameId::world(),
            timestamp: t,
        }
    }
}

/// Generates the full ground-truth sequence.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    cfg.validate()?;
    let agents = build_agents(cfg);
    let mut walkers: Vec<Walker> = (0..cfg.object_count as u64).map(|i| Walker::new(cfg, i)).collect();
    let infra_sensors: Vec<(AgentId, Pose<f64>)> = (0..cfg.n_infrastructure)
        .map(|k| {
            let id = AgentId(k as u32 + 1);
            (id, infra_pose(cfg, id, k).1)
        })
        .collect();
    let dt = 1.0 / cfg.frame_rate;
    let mut frames = Vec::with_capacity(cfg.frame_count());
    for index in 0..cfg.frame_count() {
        let t = cfg.frame_time(index);
        if index > 0 {
            for w in &mut walkers {
                w.advance(dt);
            }
        }
        let objects = walkers
            .iter()
            .enumerate()
            .map(|(i, w)| TruthObject { id: i as u64, state: w.state(t) })
            .collect();
        let mut agent_poses = BTreeMap::new();
        agent_poses.insert(EGO_ID, ego_sensor_pose(cfg, t));
        for (id, p) in &infra_sensors {
            agent_poses.insert(*id, Pose { timestamp: t, ..p.clone() });
        }
        frames.push(GroundTruthFrame { index, timestamp: t, objects, agent_poses });
    }
    Ok(Scenario { config: cfg.clone(), agents, frames })
}

/// Whether another object's footprint disk cuts the observer→target segment
/// in the ground plane.
pub fn is_occluded(observer: &Pose<f64>, target: &ObjectState<f64>, others: &[ObjectState<f64>]) -> bool {
    let o = observer.position.xy();
    let p = target.position.xy();
    let d = p - o;
    let len2 = d.norm_squared();
    others.iter().any(|b| {
        let r = b.footprint_radius();
        let c = b.position.xy();
        if len2 <= 0.0 {
            return (c - o).norm() <= r;
        }
        // Roots of |o + s d - c|² = r² on s ∈ [0, 1].
        let f = o - c;
        let bq = 2.0 * f.dot(&d);
        let cq = f.norm_squared() - r * r;
        let disc = bq * bq - 4.0 * len2 * cq;
        if disc < 0.0 {
            return false;
        }
        let sq = disc.sqrt();
        let s0 = (-bq - sq) / (2.0 * len2);
        let s1 = (-bq + sq) / (2.0 * len2);
        s0 < 1.0 && s1 >= 0.0
    })
}

/// Noise-free visibility: ground-plane range, azimuth window and occlusion.
pub fn is_visible(
    observer: &Pose<f64>,
    model: &SensorModel,
    target: &ObjectState<f64>,
    others: &[ObjectState<f64>],
) -> bool {
    let rel = target.position - observer.position;
    if rel.xy().norm() > model.max_range {
        return false;
    }
    if model.azimuth_fov < TAU {
        let bearing = normalize_angle(rel.y.atan2(rel.x) - observer.yaw);
        if bearing.abs() > model.azimuth_fov / 2.0 {
            return false;
        }
    }
    if model.occlusion_enabled && observer.position.z <= OCCLUSION_EXEMPT_HEIGHT {
        return !is_occluded(observer, target, others);
    }
    true
}

/// Visibility of every object in `frame` from `observer`, in object order.
pub fn visibility_mask(observer: &Pose<f64>, model: &SensorModel, frame: &GroundTruthFrame) -> Vec<bool> {
    let states: Vec<ObjectState<f64>> = frame.objects.iter().map(|o| o.state.clone()).collect();
    let mut others = Vec::with_capacity(states.len());
    (0..states.len())
        .map(|i| {
            others.clear();
            others.extend(states.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()));
            is_visible(observer, model, &states[i], &others)
        })
        .collect()
}

fn gaussian3(rng: &mut StreamRng, std: f64) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for i in 0..3 {
        let z: f64 = StandardNormal.sample(rng);
        v[i] = z * std;
    }
    v
}

/// Draws one frame of detections for the sensor at `observer`.
///
/// Every object consumes the same draws whether or not it is visible, then
/// clutter is drawn. Output is expressed in `observer.frame`, ordered by
/// range, with ids assigned in that order.
pub fn sense(
    agent: AgentId,
    observer: &Pose<f64>,
    model: &SensorModel,
    truth: &GroundTruthFrame,
    rng: &mut StreamRng,
) -> Vec<Detection<f64>> {
    let visible = visibility_mask(observer, model, truth);
    let to_sensor = observer.inverse();
    let mut found: Vec<(f64, ObjectState<f64>)> = Vec::new();
    let emit = |world_pos: Vector3<f64>, extent: Vector3<f64>, yaw: f64, noise: Vector3<f64>| {
        let local = to_sensor.transform_point(&world_pos) + noise;
        ObjectState {
            position: local,
            velocity: Vector3::zeros(),
            extent,
            yaw: normalize_angle(yaw - observer.yaw),
            frame: observer.frame.clone(),
            timestamp: truth.timestamp,
        }
    };
    for (obj, vis) in truth.objects.iter().zip(&visible) {
        let u: f64 = rng.random();
        let noise = gaussian3(rng, model.position_noise_std);
        if *vis && u < model.detection_prob {
            let s = emit(obj.state.position, obj.state.extent, obj.state.yaw, noise);
            found.push((s.position.norm(), s));
        }
    }
    let n_clutter = poisson_count(rng, model.clutter_rate);
    for _ in 0..n_clutter {
        let r = model.max_range * rng.random::<f64>().sqrt();
        let b = observer.yaw + (rng.random::<f64>() - 0.5) * model.azimuth_fov;
        let yaw = rng.random_range(-PI..PI);
        let world = Vector3::new(observer.position.x + r * b.cos(), observer.position.y + r * b.sin(), CAR_EXTENT[2] / 2.0);
        let s = emit(world, Vector3::from(CAR_EXTENT), yaw, Vector3::zeros());
        found.push((s.position.norm(), s));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let noise = model.measurement_noise();
    found
        .into_iter()
        .enumerate()
        .map(|(i, (_, s))| Detection {
            id: i as u64,
            centroid: s,
            measurement_noise: noise.clone(),
            source_agent: agent,
            timestamp: truth.timestamp,
        })
        .collect()
}

/// The sensing stream of one agent at one frame.
pub fn sensing_stream(seed: u64, agent: AgentId, frame_index: usize) -> StreamRng {
    stream(seed, Domain::Sensing, agent.0 as u64, frame_index as u64)
}

/// Infrastructure pole yaw pointing at the map centre, used by tests and layouts.
pub fn facing_centre(xy: Vector2<f64>) -> f64 {
    if xy.norm() == 0.0 {
        return FRAC_PI_4;
    }
    (-xy.y).atan2(-xy.x)
}
