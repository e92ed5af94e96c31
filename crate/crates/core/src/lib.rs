//! Deterministic event-driven simulation of attacks on centralized
//! multi-agent collaborative sensor fusion.
//!
//! Geometry, tracking, assignment and fusion are generic over the scalar
//! type; the simulation layers above them run in `f64`.

pub mod adversary;
pub mod assignment;
pub mod bus;
pub mod config;
pub mod fusion;
pub mod geometry;
pub mod launch;
pub mod messages;
pub mod metrics;
pub mod montecarlo;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod snapshot;
pub mod tracking;

pub use geometry::{AgentId, FrameId};
pub use scalar::Scalar;

pub type Pose = geometry::Pose<f64>;
pub type ObjectState = geometry::ObjectState<f64>;
pub type Covariance = geometry::Covariance<f64>;
pub type Detection = tracking::Detection<f64>;
pub type Track = tracking::Track<f64>;
pub type Tracker = tracking::Tracker<f64>;
pub type TrackerConfig = tracking::TrackerConfig<f64>;
pub type TrackBatch = fusion::TrackBatch<f64>;
pub type FusedState = fusion::FusedState<f64>;
pub type CommandCenter = fusion::CommandCenter<f64>;
pub type CommandCenterConfig = fusion::CommandCenterConfig<f64>;

pub type PoseF32 = geometry::Pose<f32>;
pub type TrackF32 = tracking::Track<f32>;
pub type CovarianceF32 = geometry::Covariance<f32>;
