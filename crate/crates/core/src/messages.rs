//! Payloads carried on the simulation bus.

use serde::{Deserialize, Serialize};

use crate::adversary::AttackDirective;
use crate::fusion::TrackBatch;
use crate::geometry::{AgentId, Pose};
use crate::tracking::{Detection, Track};

/// One sensor frame of detections, expressed in the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBatch {
    pub agent: AgentId,
    pub frame_index: usize,
    pub timestamp: f64,
    /// Sensor pose in the world frame.
    pub sensor_pose: Pose<f64>,
    pub detections: Vec<Detection<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub agent: AgentId,
    pub timestamp: f64,
    pub pose: Pose<f64>,
}

/// The command center's world-frame picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcPicture {
    pub timestamp: f64,
    pub tracks: Vec<Track<f64>>,
}

/// An adversary's view of its host, sent to the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorReport {
    pub adversary: AgentId,
    pub batch: TrackBatch<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Detections(DetectionBatch),
    Tracks(TrackBatch<f64>),
    Status(AgentStatus),
    CcTracks(CcPicture),
    Report(CoordinatorReport),
    Directive(AttackDirective),
}

pub mod topics {
    use crate::bus::Topic;
    use crate::geometry::AgentId;

    pub fn detections(agent: AgentId) -> Topic {
        Topic::new(format!("detections/{agent}"))
    }

    pub fn tracks(agent: AgentId) -> Topic {
        Topic::new(format!("tracks/{agent}"))
    }

    pub fn status(agent: AgentId) -> Topic {
        Topic::new(format!("status/{agent}"))
    }

    pub fn raw(topic: &Topic) -> Topic {
        Topic::new(format!("{topic}/raw"))
    }

    pub fn cc_tracks() -> Topic {
        Topic::new("cc/tracks")
    }

    pub fn reports() -> Topic {
        Topic::new("adversary/reports")
    }

    pub fn directives() -> Topic {
        Topic::new("adversary/directives")
    }
}
