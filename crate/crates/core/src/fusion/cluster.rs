use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::AgentId;
use crate::scalar::Scalar;
use crate::tracking::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cluster<T: Scalar> {
    pub members: Vec<(AgentId, Track<T>)>,
    pub centroid: Vector3<T>,
}

impl<T: Scalar> Cluster<T> {
    fn seed(agent: AgentId, track: Track<T>) -> Self {
        let centroid = track.position();
        Self { members: vec![(agent, track)], centroid }
    }

    pub fn has_agent(&self, agent: AgentId) -> bool {
        self.members.iter().any(|(a, _)| *a == agent)
    }

    fn centroid_with(&self, p: &Vector3<T>) -> Vector3<T> {
        let n = T::lit(self.members.len() as f64);
        (self.centroid * n + p) / (n + T::one())
    }
}

/// Greedy sampled-assignment clustering.
///
/// Tracks are visited in `(agent, track id)` order. Each joins the first
/// cluster whose centroid lies within `radius`, that holds no track from the
/// same agent, and whose members all stay within `radius` of the updated
/// centroid; otherwise it seeds a new cluster.
pub fn cluster_tracks<T: Scalar>(
    batches: &BTreeMap<AgentId, Vec<Track<T>>>,
    radius: T,
) -> Vec<Cluster<T>> {
    let mut clusters: Vec<Cluster<T>> = Vec::new();
    for (&agent, tracks) in batches {
        let mut sorted: Vec<&Track<T>> = tracks.iter().collect();
        sorted.sort_by_key(|t| t.id);
        for track in sorted {
            let p = track.position();
            let slot = clusters.iter().position(|c| {
                if c.has_agent(agent) || (c.centroid - p).norm() > radius {
                    return false;
                }
                let next = c.centroid_with(&p);
                (next - p).norm() <= radius
                    && c.members.iter().all(|(_, m)| (m.position() - next).norm() <= radius)
            });
            match slot {
                Some(i) => {
                    let c = &mut clusters[i];
                    c.centroid = c.centroid_with(&p);
                    c.members.push((agent, track.clone()));
                }
                None => clusters.push(Cluster::seed(agent, track.clone())),
            }
        }
    }
    clusters
}
