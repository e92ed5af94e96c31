//! Command-center fusion: collation, clustering, covariance intersection and
//! group tracking.

mod center;
mod ci;
mod cluster;
mod collate;

use thiserror::Error;

pub use center::{
    fuse_cluster, Broker, CommandCenter, CommandCenterConfig, CycleOutput, Primary, COMMAND_CENTER_ID,
};
pub use ci::{ci_pair, ci_trace, fuse_ci, golden_section, CiPair, FusedState, OMEGA_TOLERANCE};
pub use cluster::{cluster_tracks, Cluster};
pub use collate::{collate, Collated, TrackBatch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no members to fuse")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("member covariance cannot be inverted")]
    Singular,
}
