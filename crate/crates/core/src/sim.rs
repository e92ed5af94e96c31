//! Closed-loop simulation: scenario, bus, agents, command center and
//! adversaries wired together and stepped frame by frame.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    apply_to_detections, apply_to_tracks, select_targets_coordinated, select_targets_uncoordinated,
    AdversaryParams, AttackDirective, AttackEvent,
};
use crate::bus::{Bus, BusError, ChannelModel, Delivery, EventRecord, NodeId, Outbox, RemapRule, StampedMessage, Topic};
use crate::fusion::{CommandCenter, CommandCenterConfig, CycleOutput, FusionError, TrackBatch};
use crate::geometry::{transform_to, AgentId, FrameId, Pose};
use crate::rng::{stream, Domain};
use crate::messages::{topics, AgentStatus, CcPicture, CoordinatorReport, DetectionBatch, Payload};
use crate::scenario::{generate_scenario, sense, sensing_stream, AgentKind, Scenario, ScenarioConfig, ScenarioError, EGO_ID};
use crate::tracking::{Detection, Track, Tracker, TrackerConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub infrastructure: ChannelModel,
    pub ego: ChannelModel,
    pub coordinator: ChannelModel,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { infrastructure: ChannelModel::wired(), ego: ChannelModel::wireless(), coordinator: ChannelModel::wired() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub agent_tracker: TrackerConfig<f64>,
    pub command_center: CommandCenterConfig<f64>,
    pub adversary: AdversaryParams,
    pub channels: ChannelConfig,
    /// Delay between a frame and the command-center cycle that consumes it.
    pub cycle_delay: f64,
    pub record_events: bool,
    pub debug_cc: bool,
    /// Draw the compromised agents from the seed instead of taking the lowest ids.
    pub randomize_compromised: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioConfig::default(),
            agent_tracker: TrackerConfig::default(),
            command_center: CommandCenterConfig::default(),
            adversary: AdversaryParams::default(),
            channels: ChannelConfig::default(),
            cycle_delay: 0.09,
            record_events: true,
            debug_cc: false,
            randomize_compromised: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.scenario.validate()?;
        self.agent_tracker.validate().map_err(SimError::Config)?;
        self.command_center.validate().map_err(SimError::Config)?;
        self.adversary.validate(self.scenario.n_infrastructure).map_err(SimError::Config)?;
        for c in [self.channels.infrastructure, self.channels.ego, self.channels.coordinator] {
            c.validate()?;
        }
        if !(self.cycle_delay >= 0.0 && self.cycle_delay * self.scenario.frame_rate < 1.0) {
            return Err(SimError::Config("cycle_delay must be in [0, frame period)".into()));
        }
        Ok(())
    }

    /// The same run with the attack disabled.
    pub fn baseline(&self) -> SimConfig {
        SimConfig { adversary: AdversaryParams { n_compromised: 0, ..self.adversary.clone() }, ..self.clone() }
    }

    /// Lowest-index infrastructure agents first, or a seeded draw; the ego is
    /// never compromised.
    pub fn compromised(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = (1..=self.scenario.n_infrastructure as u32).map(AgentId).collect();
        if self.randomize_compromised {
            ids.shuffle(&mut stream(self.seed, Domain::Selection, 0, 0));
        }
        ids.truncate(self.adversary.n_compromised);
        ids.sort();
        ids
    }
}

/// Everything recorded for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    /// Ego's confirmed local tracks, world frame.
    pub ego_local: Vec<Track<f64>>,
    /// Latest command-center picture held by the ego, propagated to this frame.
    pub ego_cc: Vec<Track<f64>>,
    /// The command center's own output for this frame's cycle.
    pub cc: Vec<Track<f64>>,
    /// Per agent: the world-frame tracks the command center received for this frame.
    pub reported: BTreeMap<AgentId, Vec<Track<f64>>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<FrameRecord>,
    pub events: Vec<EventRecord>,
    pub attack_log: Vec<AttackEvent>,
    pub cc_dump: Vec<CycleOutput<f64>>,
    pub compromised: Vec<AgentId>,
}

struct AgentNode {
    id: AgentId,
    tracking_pose: Pose<f64>,
    tracker: Tracker<f64>,
    uplink: ChannelModel,
    last_local: Vec<Track<f64>>,
    cc_picture: Option<CcPicture>,
}

impl AgentNode {
    fn on_detections(&mut self, batch: &DetectionBatch, out: &mut Outbox<Payload>) {
        let frame = FrameId::agent(self.id);
        let rel = self
            .tracking_pose
            .inverse()
            .compose(&batch.sensor_pose)
            .expect("sensor pose is expressed in the world frame");
        let rot = rel.rotation().into_inner();
        let dets: Vec<Detection<f64>> = batch
            .detections
            .iter()
            .filter_map(|d| {
                let centroid = transform_to(&d.centroid, &rel, &frame).ok()?;
                Some(Detection { centroid, measurement_noise: d.measurement_noise.rotate_blocks(&rot), ..d.clone() })
            })
            .collect();
        let tracks = self.tracker.step(&dets, batch.timestamp);
        self.last_local = tracks.clone();
        let source = NodeId::new(format!("agent:{}", self.id));
        out.publish(
            StampedMessage {
                topic: topics::status(self.id),
                source: source.clone(),
                timestamp: batch.timestamp,
                payload: Payload::Status(AgentStatus {
                    agent: self.id,
                    timestamp: batch.timestamp,
                    pose: batch.sensor_pose.clone(),
                }),
            },
            self.uplink,
        );
        out.publish(
            StampedMessage {
                topic: topics::tracks(self.id),
                source,
                timestamp: batch.timestamp,
                payload: Payload::Tracks(TrackBatch {
                    agent: self.id,
                    timestamp: batch.timestamp,
                    frame_pose: self.tracking_pose.clone(),
                    tracks,
                }),
            },
            self.uplink,
        );
    }
}

struct AdversaryNode {
    host: AgentId,
    directive: Option<AttackDirective>,
    epoch: Option<u64>,
    reported_epoch: Option<u64>,
}

struct CoordinatorNode {
    expected: usize,
    reports: BTreeMap<u64, BTreeMap<AgentId, TrackBatch<f64>>>,
    issued_epoch: Option<u64>,
}

struct World {
    seed: u64,
    params: AdversaryParams,
    assign_radius: f64,
    coordinator_channel: ChannelModel,
    agents: BTreeMap<AgentId, AgentNode>,
    adversaries: BTreeMap<AgentId, AdversaryNode>,
    coordinator: Option<CoordinatorNode>,
    cc: CommandCenter<f64>,
    reported: BTreeMap<(usize, AgentId), Vec<Track<f64>>>,
    frame_rate: f64,
    attack_log: Vec<AttackEvent>,
}

fn epoch_of(params: &AdversaryParams, t: f64) -> Option<u64> {
    if t + 1e-9 < params.onset {
        return None;
    }
    Some(match params.refresh_period {
        Some(p) => ((t - params.onset + 1e-9) / p).floor() as u64,
        None => 0,
    })
}

fn node_agent(node: &NodeId, prefix: &str) -> Option<AgentId> {
    node.as_str().strip_prefix(prefix)?.parse().ok().map(AgentId)
}

impl World {
    fn handle(&mut self, d: &Delivery<Payload>, out: &mut Outbox<Payload>) {
        let sub = &d.subscriber;
        if sub.as_str() == "cc" {
            match &d.msg.payload {
                Payload::Status(s) => {
                    self.cc.broker.on_status(s.agent, s.timestamp);
                }
                Payload::Tracks(b) => {
                    let frame = (b.timestamp * self.frame_rate).round() as usize;
                    self.reported.insert((frame, b.agent), b.world_tracks());
                    self.cc.broker.on_batch(b.clone());
                }
                _ => {}
            }
            return;
        }
        if sub.as_str() == "coordinator" {
            if let Payload::Report(r) = &d.msg.payload {
                self.on_report(r, out);
            }
            return;
        }
        if let Some(agent) = node_agent(sub, "agent:") {
            let Some(node) = self.agents.get_mut(&agent) else { return };
            match &d.msg.payload {
                Payload::Detections(b) => node.on_detections(b, out),
                Payload::CcTracks(p) => {
                    if node.cc_picture.as_ref().is_none_or(|old| old.timestamp <= p.timestamp) {
                        node.cc_picture = Some(p.clone());
                    }
                }
                _ => {}
            }
            return;
        }
        if let Some(host) = node_agent(sub, "adversary:") {
            self.on_intercept(host, d, out);
        }
    }

    fn on_intercept(&mut self, host: AgentId, d: &Delivery<Payload>, out: &mut Outbox<Payload>) {
        let params = self.params.clone();
        let seed = self.seed;
        let Some(adv) = self.adversaries.get_mut(&host) else { return };
        match &d.msg.payload {
            Payload::Detections(b) => {
                let epoch = epoch_of(&params, b.timestamp);
                if epoch.is_some() && epoch != adv.epoch {
                    let world: Vec<_> = b
                        .detections
                        .iter()
                        .map(|det| {
                            let mut s = det.centroid.clone();
                            s.position = b.sensor_pose.transform_point(&s.position);
                            s.frame = FrameId::world();
                            s
                        })
                        .collect();
                    let mut rng = params.rng(seed, host, epoch.unwrap_or(0));
                    let directive =
                        select_targets_uncoordinated(&world, &b.sensor_pose.position, &params, &mut rng, b.timestamp);
                    self.attack_log.push(AttackEvent::select(Some(host), &directive));
                    adv.directive = Some(directive);
                    adv.epoch = epoch;
                }
                let payload = match adv.directive.as_mut() {
                    Some(dir) => {
                        let (batch, app) = apply_to_detections(b, dir, &params, true);
                        self.attack_log.push(AttackEvent::Apply {
                            time: b.timestamp,
                            agent: host,
                            removed: app.removed,
                            appended: app.appended,
                        });
                        Payload::Detections(batch)
                    }
                    None => d.msg.payload.clone(),
                };
                out.forward(d, topics::detections(host), payload);
            }
            Payload::Tracks(b) => {
                let epoch = epoch_of(&params, b.timestamp);
                if epoch.is_some() && epoch != adv.reported_epoch && (adv.directive.is_none() || epoch != adv.epoch) {
                    adv.reported_epoch = epoch;
                    out.publish(
                        StampedMessage {
                            topic: topics::reports(),
                            source: d.subscriber.clone(),
                            timestamp: b.timestamp,
                            payload: Payload::Report(CoordinatorReport { adversary: host, batch: b.clone() }),
                        },
                        self.coordinator_channel,
                    );
                }
                let payload = match adv.directive.as_mut() {
                    Some(dir) => {
                        let (batch, app) = apply_to_tracks(b, dir, &params, false);
                        self.attack_log.push(AttackEvent::Apply {
                            time: b.timestamp,
                            agent: host,
                            removed: app.removed,
                            appended: app.appended,
                        });
                        Payload::Tracks(batch)
                    }
                    None => d.msg.payload.clone(),
                };
                out.forward(d, topics::tracks(host), payload);
            }
            Payload::Directive(dir) => {
                adv.epoch = epoch_of(&params, dir.issue_time);
                adv.directive = Some(dir.clone());
            }
            _ => {}
        }
    }

    fn on_report(&mut self, r: &CoordinatorReport, out: &mut Outbox<Payload>) {
        let params = self.params.clone();
        let Some(coord) = self.coordinator.as_mut() else { return };
        let Some(epoch) = epoch_of(&params, r.batch.timestamp) else { return };
        if coord.issued_epoch.is_some_and(|e| e >= epoch) {
            return;
        }
        let key = r.batch.timestamp.to_bits();
        let slot = coord.reports.entry(key).or_default();
        slot.insert(r.adversary, r.batch.clone());
        if slot.len() < coord.expected {
            return;
        }
        let reports = coord.reports.remove(&key).unwrap_or_default();
        coord.reports.clear();
        coord.issued_epoch = Some(epoch);
        let mut rng = params.coordinator_rng(self.seed, epoch);
        let directive =
            select_targets_coordinated(&reports, &params, self.assign_radius, &mut rng, r.batch.timestamp);
        self.attack_log.push(AttackEvent::select(None, &directive));
        out.publish(
            StampedMessage {
                topic: topics::directives(),
                source: NodeId::new("coordinator"),
                timestamp: r.batch.timestamp,
                payload: Payload::Directive(directive),
            },
            self.coordinator_channel,
        );
    }
}

/// Constant-velocity extrapolation of every track to `t`.
pub fn propagate_tracks(tracks: &[Track<f64>], t: f64) -> Vec<Track<f64>> {
    tracks
        .iter()
        .map(|tr| {
            let mut tr = tr.clone();
            let dt = t - tr.last_update;
            let v = tr.velocity();
            let mut p = tr.mean.fixed_rows_mut::<3>(0);
            p += v * dt;
            tr
        })
        .collect()
}

/// Runs one simulation over a freshly generated scenario.
pub fn run(config: &SimConfig) -> Result<RunOutput, SimError> {
    let scenario_cfg = ScenarioConfig { seed: config.seed, ..config.scenario.clone() };
    let scenario = generate_scenario(&scenario_cfg)?;
    run_scenario(config, &scenario)
}

/// Runs one simulation over a given scenario.
pub fn run_scenario(config: &SimConfig, scenario: &Scenario) -> Result<RunOutput, SimError> {
    config.validate()?;
    let mut bus: Bus<Payload> = Bus::new(config.seed);
    if config.record_events {
        bus = bus.with_event_log();
    }
    let cc_node = NodeId::new("cc");
    for t in [topics::cc_tracks(), topics::reports(), topics::directives()] {
        bus.register_topic(t);
    }
    bus.register_node(cc_node.clone());

    let mut agents = BTreeMap::new();
    for spec in &scenario.agents {
        let node = NodeId::new(format!("agent:{}", spec.id));
        let uplink = match spec.kind {
            AgentKind::Ego => config.channels.ego,
            AgentKind::Infrastructure => config.channels.infrastructure,
        };
        for t in [topics::detections(spec.id), topics::tracks(spec.id), topics::status(spec.id)] {
            bus.register_topic(t);
        }
        bus.subscribe(&topics::detections(spec.id), node.clone(), None)?;
        bus.subscribe(&topics::tracks(spec.id), cc_node.clone(), None)?;
        bus.subscribe(&topics::status(spec.id), cc_node.clone(), None)?;
        bus.subscribe(&topics::cc_tracks(), node, Some(uplink))?;
        agents.insert(
            spec.id,
            AgentNode {
                id: spec.id,
                tracking_pose: spec.tracking_pose.clone(),
                tracker: Tracker::new(config.agent_tracker.clone(), spec.id, spec.tracking_frame()),
                uplink,
                last_local: Vec::new(),
                cc_picture: None,
            },
        );
    }

    let compromised = config.compromised();
    let params = &config.adversary;
    let mut adversaries = BTreeMap::new();
    for &host in &compromised {
        if scenario.agent(host).is_none_or(|a| a.kind != AgentKind::Infrastructure) {
            return Err(SimError::Config(format!("agent {host} is not an attackable infrastructure agent")));
        }
        let node = NodeId::new(format!("adversary:{host}"));
        bus.register_node(node.clone());
        let original = if params.coordinated { topics::tracks(host) } else { topics::detections(host) };
        bus.add_remap(RemapRule { republished: topics::raw(&original), original, interceptor: node.clone() })?;
        if params.coordinated {
            bus.subscribe(&topics::directives(), node, None)?;
        }
        adversaries.insert(host, AdversaryNode { host, directive: None, epoch: None, reported_epoch: None });
    }
    let coordinator = if params.coordinated && !compromised.is_empty() {
        bus.subscribe(&topics::reports(), NodeId::new("coordinator"), None)?;
        Some(CoordinatorNode { expected: compromised.len(), reports: BTreeMap::new(), issued_epoch: None })
    } else {
        None
    };

    let mut world = World {
        seed: config.seed,
        params: params.clone(),
        assign_radius: config.command_center.assign_radius,
        coordinator_channel: config.channels.coordinator,
        agents,
        adversaries,
        coordinator,
        cc: CommandCenter::new(config.command_center.clone()),
        reported: BTreeMap::new(),
        frame_rate: scenario.config.frame_rate,
        attack_log: Vec::new(),
    };
    debug_assert!(world.adversaries.values().all(|a| compromised.contains(&a.host)));

    let mut frames = Vec::with_capacity(scenario.frames.len());
    let mut cc_dump = Vec::new();
    let sim_node = NodeId::new("simulator");
    for truth in &scenario.frames {
        let t = truth.timestamp;
        for spec in &scenario.agents {
            let pose = &truth.agent_poses[&spec.id];
            let mut rng = sensing_stream(config.seed, spec.id, truth.index);
            let detections = sense(spec.id, pose, &spec.sensor, truth, &mut rng);
            bus.publish(
                StampedMessage {
                    topic: topics::detections(spec.id),
                    source: sim_node.clone(),
                    timestamp: t,
                    payload: Payload::Detections(DetectionBatch {
                        agent: spec.id,
                        frame_index: truth.index,
                        timestamp: t,
                        sensor_pose: pose.clone(),
                        detections,
                    }),
                },
                ChannelModel::local(),
            )?;
        }
        let cycle_time = t + config.cycle_delay;
        bus.step(cycle_time, |d, out| world.handle(d, out))?;
        let cycle = world.cc.cycle(cycle_time)?;
        bus.publish(
            StampedMessage {
                topic: topics::cc_tracks(),
                source: cc_node.clone(),
                timestamp: cycle_time,
                payload: Payload::CcTracks(CcPicture { timestamp: cycle_time, tracks: cycle.tracks.clone() }),
            },
            ChannelModel::local(),
        )?;
        let ego = &world.agents[&EGO_ID];
        let ego_local: Vec<Track<f64>> =
            ego.last_local.iter().map(|tr| tr.transformed(&ego.tracking_pose)).collect();
        let ego_cc = ego.cc_picture.as_ref().map(|p| propagate_tracks(&p.tracks, t)).unwrap_or_default();
        let reported = scenario
            .agents
            .iter()
            .filter_map(|a| world.reported.remove(&(truth.index, a.id)).map(|v| (a.id, v)))
            .collect();
        frames.push(FrameRecord { index: truth.index, timestamp: t, ego_local, ego_cc, cc: cycle.tracks.clone(), reported });
        if config.debug_cc {
            cc_dump.push(cycle);
        }
    }
    let end = scenario.frames.last().map(|f| f.timestamp + 1.0 / scenario.config.frame_rate).unwrap_or(0.0);
    bus.step(end, |d, out| world.handle(d, out))?;
    Ok(RunOutput {
        frames,
        events: bus.events().to_vec(),
        attack_log: world.attack_log,
        cc_dump,
        compromised,
    })
}

/// Topics an adversary interposes on for a given configuration.
pub fn interposed_topics(config: &SimConfig) -> Vec<Topic> {
    config
        .compromised()
        .into_iter()
        .map(|a| if config.adversary.coordinated { topics::tracks(a) } else { topics::detections(a) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seconds: f64) -> SimConfig {
        let mut c = SimConfig::default();
        c.scenario.duration = seconds;
        c
    }

    #[test]
    fn baseline_runs_and_produces_pictures() {
        let out = run(&short(3.0)).unwrap();
        assert_eq!(out.frames.len(), 30);
        let last = out.frames.last().unwrap();
        assert!(!last.ego_local.is_empty());
        assert!(!last.cc.is_empty());
        assert!(!last.ego_cc.is_empty());
        assert!(out.attack_log.is_empty());
        assert!(!out.events.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run(&short(2.0)).unwrap();
        let b = run(&short(2.0)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn zero_adversaries_equal_baseline() {
        let mut c = short(2.0);
        c.adversary.coordinated = true;
        let a = run(&c).unwrap();
        let b = run(&c.baseline()).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn randomized_selection_is_seeded_and_excludes_ego() {
        let mut c = short(1.0);
        c.adversary.n_compromised = 2;
        c.randomize_compromised = true;
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..20 {
            c.seed = seed;
            let set = c.compromised();
            assert_eq!(set, c.compromised());
            assert_eq!(set.len(), 2);
            assert!(!set.contains(&EGO_ID));
            assert!(set.iter().all(|a| (1..=4).contains(&a.0)));
            seen.insert(set);
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn too_many_adversaries_rejected() {
        let mut c = short(1.0);
        c.adversary.n_compromised = 5;
        assert!(matches!(run(&c), Err(SimError::Config(_))));
    }

    #[test]
    fn uncoordinated_attack_logs_selection_and_applications() {
        let mut c = short(4.0);
        c.adversary.n_compromised = 2;
        let out = run(&c).unwrap();
        let selects = out.attack_log.iter().filter(|e| matches!(e, AttackEvent::Select { .. })).count();
        assert_eq!(selects, 2);
        assert_eq!(out.compromised, vec![AgentId(1), AgentId(2)]);
        assert_eq!(interposed_topics(&c), vec![topics::detections(AgentId(1)), topics::detections(AgentId(2))]);
    }

    #[test]
    fn coordinated_attack_issues_one_directive() {
        let mut c = short(4.0);
        c.adversary.n_compromised = 3;
        c.adversary.coordinated = true;
        let out = run(&c).unwrap();
        let selects: Vec<_> =
            out.attack_log.iter().filter(|e| matches!(e, AttackEvent::Select { agent: None, .. })).collect();
        assert_eq!(selects.len(), 1);
        assert!(out.attack_log.iter().any(|e| matches!(e, AttackEvent::Apply { .. })));
    }
}
