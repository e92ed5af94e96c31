use std::collections::BTreeMap;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::ci::{fuse_ci, FusedState};
use super::cluster::{cluster_tracks, Cluster};
use super::collate::{collate, TrackBatch};
use super::FusionError;
use crate::bus::{BoundedTimeQueue, Discovery, Membership, DEFAULT_QUEUE_CAPACITY};
use crate::geometry::{AgentId, FrameId, ObjectState};
use crate::scalar::Scalar;
use crate::tracking::{Detection, Track, Tracker, TrackerConfig};

/// Owner id stamped on command-center tracks.
pub const COMMAND_CENTER_ID: AgentId = AgentId(u32::MAX);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CommandCenterConfig<T: Scalar> {
    /// Seconds.
    pub latency_factor: f64,
    pub assign_radius: T,
    pub tracker: TrackerConfig<T>,
    pub staleness_window: f64,
    pub queue_capacity: usize,
}

impl<T: Scalar> Default for CommandCenterConfig<T> {
    fn default() -> Self {
        Self {
            latency_factor: 0.2,
            assign_radius: T::lit(2.0),
            tracker: TrackerConfig::command_center(),
            staleness_window: 0.5,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

impl<T: Scalar> CommandCenterConfig<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.latency_factor >= 0.0) {
            return Err("latency_factor must be >= 0".into());
        }
        if !(self.assign_radius > T::zero()) {
            return Err("assign_radius must be > 0".into());
        }
        if !(self.staleness_window > 0.0) {
            return Err("staleness_window must be > 0".into());
        }
        self.tracker.validate()
    }
}

/// Collation front end: discovery plus one bounded queue per live agent.
#[derive(Debug, Clone)]
pub struct Broker<T: Scalar> {
    discovery: Discovery,
    queues: BTreeMap<AgentId, BoundedTimeQueue<TrackBatch<T>>>,
    capacity: usize,
    pub discarded: u64,
}

impl<T: Scalar> Broker<T> {
    pub fn new(staleness_window: f64, capacity: usize) -> Self {
        Self { discovery: Discovery::new(staleness_window), queues: BTreeMap::new(), capacity, discarded: 0 }
    }

    pub fn on_status(&mut self, agent: AgentId, t: f64) -> Option<Membership> {
        let m = self.discovery.observe(agent, t);
        if m.is_some() {
            self.queues.insert(agent, BoundedTimeQueue::new(self.capacity));
        }
        m
    }

    pub fn on_batch(&mut self, batch: TrackBatch<T>) {
        match self.queues.get_mut(&batch.agent) {
            Some(q) if self.discovery.is_live(batch.agent) => {
                q.push(batch.timestamp, batch);
            }
            _ => self.discarded += 1,
        }
    }

    pub fn refresh(&mut self, now: f64) -> Vec<Membership> {
        let left = self.discovery.refresh(now);
        for m in &left {
            if let Membership::Left(a) = m {
                self.queues.remove(a);
            }
        }
        left
    }

    pub fn live(&self) -> Vec<AgentId> {
        self.discovery.live().iter().copied().collect()
    }

    pub fn queue_len(&self, agent: AgentId) -> Option<usize> {
        self.queues.get(&agent).map(|q| q.len())
    }
}

/// Cluster, fuse, and group-track stage.
#[derive(Debug, Clone)]
pub struct Primary<T: Scalar> {
    pub assign_radius: T,
    tracker: Tracker<T>,
    last_time: f64,
}

impl<T: Scalar> Primary<T> {
    pub fn new(assign_radius: T, tracker: TrackerConfig<T>) -> Self {
        Self {
            assign_radius,
            tracker: Tracker::new(tracker, COMMAND_CENTER_ID, FrameId::world()),
            last_time: 0.0,
        }
    }

    pub fn tracks(&self) -> Vec<Track<T>> {
        self.tracker.confirmed()
    }

    /// Feeds fused states to the group tracker as position detections.
    pub fn group_track(&mut self, fused: &[(FusedState<T>, Vector3<T>)], now: f64) -> Vec<Track<T>> {
        let t = now.max(self.last_time);
        self.last_time = t;
        let dets: Vec<Detection<T>> = fused
            .iter()
            .enumerate()
            .map(|(i, (f, extent))| {
                let position = Vector3::new(f.mean[0], f.mean[1], f.mean[2]);
                Detection {
                    id: i as u64,
                    centroid: ObjectState {
                        position,
                        velocity: Vector3::zeros(),
                        extent: *extent,
                        yaw: T::zero(),
                        frame: FrameId::world(),
                        timestamp: t,
                    },
                    measurement_noise: f.covariance.block(3),
                    source_agent: COMMAND_CENTER_ID,
                    timestamp: t,
                }
            })
            .collect();
        self.tracker.step(&dets, t)
    }
}

/// Fuses one cluster's members in membership order.
pub fn fuse_cluster<T: Scalar>(cluster: &Cluster<T>) -> Result<FusedState<T>, FusionError> {
    let members: Vec<(DVector<T>, _)> = cluster
        .members
        .iter()
        .map(|(_, t)| (DVector::from_column_slice(t.mean.as_slice()), t.covariance.clone()))
        .collect();
    let mut f = fuse_ci(&members)?;
    f.agents = cluster.members.iter().map(|(a, _)| *a).collect();
    Ok(f)
}

/// Everything produced by one command-center cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CycleOutput<T: Scalar> {
    pub now: f64,
    pub t_star: Option<f64>,
    pub collated: BTreeMap<AgentId, f64>,
    pub clusters: usize,
    pub fused: Vec<FusedState<T>>,
    pub tracks: Vec<Track<T>>,
    pub membership: Vec<Membership>,
}

#[derive(Debug, Clone)]
pub struct CommandCenter<T: Scalar> {
    pub config: CommandCenterConfig<T>,
    pub broker: Broker<T>,
    pub primary: Primary<T>,
}

impl<T: Scalar> CommandCenter<T> {
    pub fn new(config: CommandCenterConfig<T>) -> Self {
        let broker = Broker::new(config.staleness_window, config.queue_capacity);
        let primary = Primary::new(config.assign_radius, config.tracker.clone());
        Self { config, broker, primary }
    }

    /// Collate → cluster → fuse → group-track.
    pub fn cycle(&mut self, now: f64) -> Result<CycleOutput<T>, FusionError> {
        let membership = self.broker.refresh(now);
        let collated = collate(&mut self.broker.queues, now, self.config.latency_factor);
        let mut batches = BTreeMap::new();
        let mut stamps = BTreeMap::new();
        for (agent, (ts, tracks)) in collated.batches {
            stamps.insert(agent, ts);
            batches.insert(agent, tracks);
        }
        let clusters = cluster_tracks(&batches, self.config.assign_radius);
        let mut fused = Vec::with_capacity(clusters.len());
        for c in &clusters {
            let extent = c.members[0].1.extent;
            fused.push((fuse_cluster(c)?, extent));
        }
        let tracks = match collated.t_star {
            Some(t) => self.primary.group_track(&fused, t),
            None => self.primary.tracks(),
        };
        Ok(CycleOutput {
            now,
            t_star: collated.t_star,
            collated: stamps,
            clusters: clusters.len(),
            fused: fused.into_iter().map(|(f, _)| f).collect(),
            tracks,
            membership,
        })
    }
}
