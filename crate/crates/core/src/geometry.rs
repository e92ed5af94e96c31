//! Reference frames, rigid poses and the state/covariance value types.
//!
//! Orientation is yaw/pitch/roll with the ZYX convention
//! (`R = Rz(yaw) * Ry(pitch) * Rx(roll)`). All timestamps are logical
//! simulation seconds.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("frame name must be non-empty")]
    EmptyFrame,
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("frame mismatch: expected `{expected}`, found `{found}`")]
    FrameMismatch { expected: String, found: String },
    #[error("frame chain for `{0}` is cyclic")]
    CyclicFrames(String),
    #[error("covariance is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("extent components must be positive")]
    NonPositiveExtent,
    #[error("negative timestamp {0}")]
    NegativeTimestamp(f64),
}

/// Identifier of an agent (the ego is agent 0 by convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Symbolic frame name such as `world` or `agent:3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FrameId(String);

pub const WORLD: &str = "world";

impl FrameId {
    pub fn new(name: impl Into<String>) -> Result<Self, GeometryError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GeometryError::EmptyFrame);
        }
        Ok(Self(name))
    }

    pub fn world() -> Self {
        Self(WORLD.to_owned())
    }

    /// Tracking frame of an agent.
    pub fn agent(id: AgentId) -> Self {
        Self(format!("agent:{}", id.0))
    }

    /// Sensor frame of an agent (moves with the agent).
    pub fn sensor(id: AgentId) -> Self {
        Self(format!("agent:{}/sensor", id.0))
    }

    pub fn is_world(&self) -> bool {
        self.0 == WORLD
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for FrameId {
    type Error = GeometryError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FrameId> for String {
    fn from(value: FrameId) -> Self {
        value.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Scalar>(a: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut r = a - two_pi * ((a + pi) / two_pi).floor();
    if r <= -pi {
        r += two_pi;
    }
    if r > pi {
        r -= two_pi;
    }
    r
}

/// Rigid pose of `frame` expressed in `parent`: `p_parent = R * p_frame + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Pose<T: Scalar> {
    pub position: Vector3<T>,
    pub yaw: T,
    pub pitch: T,
    pub roll: T,
    pub parent: FrameId,
    pub frame: FrameId,
    pub timestamp: f64,
}

impl<T: Scalar> Pose<T> {
    pub fn new(
        parent: FrameId,
        frame: FrameId,
        position: Vector3<T>,
        yaw: T,
        pitch: T,
        roll: T,
        timestamp: f64,
    ) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
            pitch: normalize_angle(pitch),
            roll: normalize_angle(roll),
            parent,
            frame,
            timestamp: timestamp.max(0.0),
        }
    }

    /// Identity map of `frame` onto itself.
    pub fn identity(frame: FrameId) -> Self {
        Self::new(frame.clone(), frame, Vector3::zeros(), T::zero(), T::zero(), T::zero(), 0.0)
    }

    fn from_rotation(
        parent: FrameId,
        frame: FrameId,
        rot: &Rotation3<T>,
        position: Vector3<T>,
        timestamp: f64,
    ) -> Self {
        let (roll, pitch, yaw) = rot.euler_angles();
        Self::new(parent, frame, position, yaw, pitch, roll, timestamp)
    }

    pub fn rotation(&self) -> Rotation3<T> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation() * p + self.position
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation() * v
    }

    /// `self ∘ other`, where `self` maps B→A and `other` maps C→B.
    pub fn compose(&self, other: &Pose<T>) -> Result<Pose<T>, GeometryError> {
        if self.frame != other.parent {
            return Err(GeometryError::FrameMismatch {
                expected: self.frame.to_string(),
                found: other.parent.to_string(),
            });
        }
        let ra = self.rotation();
        let rot = ra * other.rotation();
        let pos = ra * other.position + self.position;
        Ok(Self::from_rotation(
            self.parent.clone(),
            other.frame.clone(),
            &rot,
            pos,
            self.timestamp.max(other.timestamp),
        ))
    }

    pub fn inverse(&self) -> Pose<T> {
        let rinv = self.rotation().inverse();
        let pos = -(rinv * self.position);
        Self::from_rotation(self.frame.clone(), self.parent.clone(), &rinv, pos, self.timestamp)
    }

    /// Compares the rigid maps (rotation matrix and translation) within `tol`.
    pub fn approx_eq(&self, other: &Pose<T>, tol: T) -> bool {
        let dr = (self.rotation().matrix() - other.rotation().matrix()).abs().max();
        let dt = (self.position - other.position).abs().max();
        self.parent == other.parent && self.frame == other.frame && dr <= tol && dt <= tol
    }
}

/// Kinematic state of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ObjectState<T: Scalar> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    /// (length, width, height) in meters.
    pub extent: Vector3<T>,
    pub yaw: T,
    pub frame: FrameId,
    pub timestamp: f64,
}

impl<T: Scalar> ObjectState<T> {
    pub fn new(
        position: Vector3<T>,
        velocity: Vector3<T>,
        extent: Vector3<T>,
        yaw: T,
        frame: FrameId,
        timestamp: f64,
    ) -> Result<Self, GeometryError> {
        if extent.iter().any(|e| *e <= T::zero()) {
            return Err(GeometryError::NonPositiveExtent);
        }
        if timestamp < 0.0 {
            return Err(GeometryError::NegativeTimestamp(timestamp));
        }
        Ok(Self {
            position,
            velocity,
            extent,
            yaw: normalize_angle(yaw),
            frame,
            timestamp,
        })
    }

    /// Radius of the bird's-eye-view footprint disk (half the box diagonal).
    pub fn footprint_radius(&self) -> T {
        let half = T::lit(0.5);
        half * (self.extent.x * self.extent.x + self.extent.y * self.extent.y).sqrt()
    }

    /// Constant-velocity propagation to `t`.
    pub fn propagated(&self, t: f64) -> Self {
        let dt = T::lit(t - self.timestamp);
        let mut out = self.clone();
        out.position += self.velocity * dt;
        out.timestamp = t;
        out
    }
}

/// Re-expresses `state` in `to_frame`, given the pose of `state.frame` in `to_frame`.
pub fn transform_to<T: Scalar>(
    state: &ObjectState<T>,
    from: &Pose<T>,
    to_frame: &FrameId,
) -> Result<ObjectState<T>, GeometryError> {
    if from.frame != state.frame {
        return Err(GeometryError::FrameMismatch {
            expected: state.frame.to_string(),
            found: from.frame.to_string(),
        });
    }
    if &from.parent != to_frame {
        return Err(GeometryError::FrameMismatch {
            expected: to_frame.to_string(),
            found: from.parent.to_string(),
        });
    }
    if from.frame == from.parent {
        return Ok(state.clone());
    }
    Ok(ObjectState {
        position: from.transform_point(&state.position),
        velocity: from.transform_vector(&state.velocity),
        extent: state.extent,
        yaw: normalize_angle(state.yaw + from.yaw),
        frame: to_frame.clone(),
        timestamp: state.timestamp,
    })
}

/// Registry of frame poses, each expressed in a parent frame, rooted at `world`.
#[derive(Debug, Clone, Default)]
pub struct FrameTree<T: Scalar> {
    poses: BTreeMap<FrameId, Pose<T>>,
}

impl<T: Scalar> FrameTree<T> {
    pub fn new() -> Self {
        Self { poses: BTreeMap::new() }
    }

    /// Registers (or replaces) the pose of `pose.frame` in `pose.parent`.
    pub fn set(&mut self, pose: Pose<T>) -> Result<(), GeometryError> {
        if pose.frame.is_world() {
            return Err(GeometryError::FrameMismatch {
                expected: "non-world frame".into(),
                found: WORLD.into(),
            });
        }
        if !pose.parent.is_world() && !self.poses.contains_key(&pose.parent) {
            return Err(GeometryError::UnknownFrame(pose.parent.to_string()));
        }
        self.poses.insert(pose.frame.clone(), pose);
        Ok(())
    }

    pub fn contains(&self, frame: &FrameId) -> bool {
        frame.is_world() || self.poses.contains_key(frame)
    }

    /// Pose of `frame` expressed in `world`.
    pub fn world_pose(&self, frame: &FrameId) -> Result<Pose<T>, GeometryError> {
        if frame.is_world() {
            return Ok(Pose::identity(FrameId::world()));
        }
        let mut pose = self
            .poses
            .get(frame)
            .cloned()
            .ok_or_else(|| GeometryError::UnknownFrame(frame.to_string()))?;
        let mut hops = 0;
        while !pose.parent.is_world() {
            hops += 1;
            if hops > self.poses.len() {
                return Err(GeometryError::CyclicFrames(frame.to_string()));
            }
            let parent = self
                .poses
                .get(&pose.parent)
                .ok_or_else(|| GeometryError::UnknownFrame(pose.parent.to_string()))?;
            pose = parent.compose(&pose)?;
        }
        Ok(pose)
    }

    /// Pose of `from` expressed in `to`.
    pub fn relative(&self, from: &FrameId, to: &FrameId) -> Result<Pose<T>, GeometryError> {
        let from_w = self.world_pose(from)?;
        if to.is_world() {
            return Ok(from_w);
        }
        let to_w = self.world_pose(to)?;
        to_w.inverse().compose(&from_w)
    }

    pub fn transform(
        &self,
        state: &ObjectState<T>,
        to: &FrameId,
    ) -> Result<ObjectState<T>, GeometryError> {
        if &state.frame == to {
            return Ok(state.clone());
        }
        let pose = self.relative(&state.frame, to)?;
        transform_to(state, &pose, to)
    }
}

/// Symmetric positive semi-definite covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Covariance<T: Scalar>(DMatrix<T>);

impl<T: Scalar> Covariance<T> {
    /// Validates symmetry and positive semi-definiteness.
    pub fn new(m: DMatrix<T>) -> Result<Self, GeometryError> {
        check_covariance(&m)?;
        Ok(Self(m))
    }

    /// Wraps without validation; callers must uphold the invariants.
    pub fn new_unchecked(m: DMatrix<T>) -> Self {
        Self(m)
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn isotropic(dim: usize, variance: T) -> Self {
        Self(DMatrix::identity(dim, dim) * variance)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    pub fn is_valid(&self) -> bool {
        check_covariance(&self.0).is_ok()
    }

    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.0)
    }

    /// Top-left `n x n` block.
    pub fn block(&self, n: usize) -> Covariance<T> {
        Covariance(self.0.view((0, 0), (n, n)).into_owned())
    }

    /// `M P M^T` for a square map `M`.
    pub fn congruence(&self, m: &DMatrix<T>) -> Covariance<T> {
        let out = m * &self.0 * m.transpose();
        Covariance(symmetrize(&out))
    }

    /// Rotates a covariance whose state is a stack of 3-vectors (position,
    /// velocity, ...) by `rot` applied to every 3-block.
    pub fn rotate_blocks(&self, rot: &Matrix3<T>) -> Covariance<T> {
        let n = self.dim();
        debug_assert_eq!(n % 3, 0);
        let mut m = DMatrix::zeros(n, n);
        for b in 0..n / 3 {
            m.view_mut((3 * b, 3 * b), (3, 3)).copy_from(rot);
        }
        self.congruence(&m)
    }

    /// Symmetric projection onto the PSD cone: symmetrize, then clamp negative
    /// eigenvalues to zero. Returns whether any change beyond symmetrization
    /// was needed.
    pub fn repaired(m: &DMatrix<T>) -> (Covariance<T>, bool) {
        let sym = symmetrize(m);
        let asymmetric = || {
            let scale = T::one().max(m.abs().max());
            (m - m.transpose()).abs().max() > T::tolerance() * scale
        };
        if sym.clone().cholesky().is_some() {
            return (Covariance(sym), asymmetric());
        }
        let eig = sym.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|v| *v >= T::zero()) {
            return (Covariance(sym), asymmetric());
        }
        let clamped = eig.eigenvalues.map(|v| if v < T::zero() { T::zero() } else { v });
        let rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        (Covariance(symmetrize(&rebuilt)), true)
    }
}

pub(crate) fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
}

fn check_covariance<T: Scalar>(m: &DMatrix<T>) -> Result<(), GeometryError> {
    if m.nrows() != m.ncols() {
        return Err(GeometryError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let tol = T::tolerance();
    let asym = (m - m.transpose()).abs().max();
    let scale = T::one().max(m.abs().max());
    if asym > tol * scale {
        return Err(GeometryError::NotSymmetric(asym.as_f64()));
    }
    if m.nrows() == 0 || symmetrize(m).cholesky().is_some() {
        return Ok(());
    }
    let min = min_eigenvalue(m);
    if min < -tol * scale {
        return Err(GeometryError::NotPsd(min.as_f64()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn agent_frame() -> FrameId {
        FrameId::new("agent:1").unwrap()
    }

    fn state(frame: FrameId, x: f64, y: f64) -> ObjectState<f64> {
        ObjectState::new(
            Vector3::new(x, y, 0.0),
            Vector3::new(1.0, -0.5, 0.0),
            Vector3::new(4.5, 1.9, 1.6),
            0.3,
            frame,
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_frame_rejected() {
        assert_eq!(FrameId::new(""), Err(GeometryError::EmptyFrame));
    }

    #[test]
    fn identity_transform_is_bitwise_equal() {
        let s = state(agent_frame(), 3.0, 4.0);
        let id = Pose::identity(agent_frame());
        let out = transform_to(&s, &id, &agent_frame()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn translation_leaves_velocity() {
        let s = ObjectState::new(
            Vector3::new(1.0, 2.0, 0.0),
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 1.0),
            0.0,
            agent_frame(),
            0.0,
        )
        .unwrap();
        let pose = Pose::new(
            FrameId::world(),
            agent_frame(),
            Vector3::new(10.0, 0.0, 0.0),
            0.0,
            0.0,
            0.0,
            0.0,
        );
        let out = transform_to(&s, &pose, &FrameId::world()).unwrap();
        assert_eq!(out.position, Vector3::new(11.0, 2.0, 0.0));
        assert_eq!(out.velocity, s.velocity);
        assert_eq!(out.frame, FrameId::world());
    }

    #[test]
    fn yaw_round_trip() {
        let s = state(agent_frame(), 3.0, -7.0);
        let pose = Pose::new(
            FrameId::world(),
            agent_frame(),
            Vector3::new(5.0, 1.0, 2.0),
            FRAC_PI_2,
            0.0,
            0.0,
            0.0,
        );
        let w = transform_to(&s, &pose, &FrameId::world()).unwrap();
        assert!((w.position - Vector3::new(12.0, 4.0, 2.0)).norm() < 1e-12);
        let back = transform_to(&w, &pose.inverse(), &agent_frame()).unwrap();
        assert!((back.position - s.position).norm() < 1e-9);
        assert!((back.velocity - s.velocity).norm() < 1e-9);
        assert!((back.yaw - s.yaw).abs() < 1e-9);
    }

    #[test]
    fn wrong_pose_frame_is_error() {
        let s = state(agent_frame(), 0.0, 0.0);
        let pose: Pose<f64> = Pose::identity(FrameId::world());
        assert!(matches!(
            transform_to(&s, &pose, &FrameId::world()),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn compose_identity_and_inverse() {
        let p = Pose::new(
            FrameId::world(),
            agent_frame(),
            Vector3::new(1.0, 2.0, 15.0),
            0.7,
            -0.5,
            0.1,
            0.0,
        );
        let left = Pose::identity(FrameId::world()).compose(&p).unwrap();
        assert!(left.approx_eq(&p, 1e-12));
        let id = p.compose(&p.inverse()).unwrap();
        assert!(id.approx_eq(&Pose::identity(FrameId::world()), 1e-9));
        assert!(matches!(p.compose(&p), Err(GeometryError::FrameMismatch { .. })));
    }

    #[test]
    fn frame_tree_resolves_chain_and_rejects_unknown() {
        let mut tree = FrameTree::new();
        tree.set(Pose::new(
            FrameId::world(),
            agent_frame(),
            Vector3::new(10.0, 0.0, 0.0),
            FRAC_PI_2,
            0.0,
            0.0,
            0.0,
        ))
        .unwrap();
        let sensor = FrameId::new("agent:1/sensor").unwrap();
        tree.set(Pose::new(agent_frame(), sensor.clone(), Vector3::new(1.0, 0.0, 0.0), 0.0, 0.0, 0.0, 0.0))
            .unwrap();
        let w = tree.world_pose(&sensor).unwrap();
        assert!((w.position - Vector3::new(10.0, 1.0, 0.0)).norm() < 1e-12);
        let unknown = FrameId::new("nope").unwrap();
        assert_eq!(
            tree.world_pose(&unknown),
            Err(GeometryError::UnknownFrame("nope".into()))
        );
        let s = state(unknown.clone(), 0.0, 0.0);
        assert!(tree.transform(&s, &FrameId::world()).is_err());
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance::new(DMatrix::<f64>::identity(3, 3)).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(Covariance::new(asym), Err(GeometryError::NotSymmetric(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(Covariance::new(indefinite.clone()), Err(GeometryError::NotPsd(_))));
        let (fixed, changed) = Covariance::repaired(&indefinite);
        assert!(changed);
        assert!(fixed.is_valid());
    }

    #[test]
    fn generic_over_f32() {
        let p = Pose::<f32>::new(
            FrameId::world(),
            agent_frame(),
            Vector3::new(1.0, 2.0, 3.0),
            0.4,
            0.0,
            0.0,
            0.0,
        );
        let id = p.compose(&p.inverse()).unwrap();
        assert!(id.approx_eq(&Pose::identity(FrameId::world()), 1e-5));
    }

    fn arb_pose(parent: &'static str, frame: &'static str) -> impl Strategy<Value = Pose<f64>> {
        (
            prop::array::uniform3(-50.0..50.0f64),
            -PI..PI,
            -1.2..1.2f64,
            -PI..PI,
        )
            .prop_map(move |(p, yaw, pitch, roll)| {
                Pose::new(
                    FrameId::new(parent).unwrap(),
                    FrameId::new(frame).unwrap(),
                    Vector3::from(p),
                    yaw,
                    pitch,
                    roll,
                    0.0,
                )
            })
    }

    proptest! {
        #[test]
        fn compose_is_associative(
            a in arb_pose("A", "B"),
            b in arb_pose("B", "C"),
            c in arb_pose("C", "D"),
        ) {
            let left = a.compose(&b).unwrap().compose(&c).unwrap();
            let right = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert!(left.approx_eq(&right, 1e-9));
        }

        #[test]
        fn transform_round_trip_and_rigidity(
            pose in arb_pose("world", "agent:1"),
            p1 in prop::array::uniform3(-80.0..80.0f64),
            p2 in prop::array::uniform3(-80.0..80.0f64),
        ) {
            let mk = |p: [f64; 3]| ObjectState::new(
                Vector3::from(p), Vector3::new(0.5, 1.0, 0.0), Vector3::new(4.0, 2.0, 1.5),
                0.2, agent_frame(), 3.0).unwrap();
            let (s1, s2) = (mk(p1), mk(p2));
            let w1 = transform_to(&s1, &pose, &FrameId::world()).unwrap();
            let w2 = transform_to(&s2, &pose, &FrameId::world()).unwrap();
            let back = transform_to(&w1, &pose.inverse(), &agent_frame()).unwrap();
            prop_assert!((back.position - s1.position).norm() < 1e-9);
            prop_assert!((back.velocity - s1.velocity).norm() < 1e-9);
            prop_assert_eq!(back.timestamp, s1.timestamp);
            let d_before = (s1.position - s2.position).norm();
            let d_after = (w1.position - w2.position).norm();
            prop_assert!((d_before - d_after).abs() < 1e-9);
        }
    }
}
