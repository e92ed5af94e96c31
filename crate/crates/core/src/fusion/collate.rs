use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::BoundedTimeQueue;
use crate::geometry::{AgentId, Pose};
use crate::scalar::Scalar;
use crate::tracking::Track;

/// Confirmed tracks published by one agent for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrackBatch<T: Scalar> {
    pub agent: AgentId,
    pub timestamp: f64,
    /// Pose of the tracks' frame in the world frame.
    pub frame_pose: Pose<T>,
    pub tracks: Vec<Track<T>>,
}

impl<T: Scalar> TrackBatch<T> {
    /// Tracks re-expressed in the world frame.
    pub fn world_tracks(&self) -> Vec<Track<T>> {
        self.tracks
            .iter()
            .map(|t| if t.frame == self.frame_pose.parent { t.clone() } else { t.transformed(&self.frame_pose) })
            .collect()
    }
}

/// Result of one collation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Collated<T: Scalar> {
    /// The alignment time, or `None` when every queue was empty.
    pub t_star: Option<f64>,
    /// Per agent: the popped batch timestamp and its world-frame tracks.
    pub batches: BTreeMap<AgentId, (f64, Vec<Track<T>>)>,
}

/// Time-aligns per-agent batches.
///
/// `t* = max(min over non-empty queues of their newest stamp, now - latency_factor)`;
/// each queue then yields its batch closest to `t*` within `latency_factor`.
pub fn collate<T: Scalar>(
    queues: &mut BTreeMap<AgentId, BoundedTimeQueue<TrackBatch<T>>>,
    now: f64,
    latency_factor: f64,
) -> Collated<T> {
    let newest = queues
        .values()
        .filter_map(|q| q.newest_time())
        .min_by(f64::total_cmp);
    let Some(newest) = newest else {
        return Collated { t_star: None, batches: BTreeMap::new() };
    };
    let t_star = newest.max(now - latency_factor);
    let mut batches = BTreeMap::new();
    for (&agent, q) in queues.iter_mut() {
        if let Some((ts, batch)) = q.pop_closest(t_star, latency_factor) {
            batches.insert(agent, (ts, batch.world_tracks()));
        }
    }
    Collated { t_star: Some(t_star), batches }
}
