//! Local multi-object tracking: constant-velocity Kalman filtering over a
//! 6-D (position, velocity) state with position-only measurements, gated
//! optimal assignment, and hit/miss track lifecycle.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{distance_matrix, solve_gated};
use crate::geometry::{normalize_angle, AgentId, Covariance, FrameId, ObjectState, Pose};
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 6;
pub const MEAS_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("cannot predict backwards in time ({from} -> {to})")]
    TemporalOrder { from: f64, to: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// One instantaneous object observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Detection<T: Scalar> {
    /// Per-frame identifier; detections are emitted sorted by it.
    pub id: u64,
    /// Centroid state; velocity is always zero.
    pub centroid: ObjectState<T>,
    pub measurement_noise: Covariance<T>,
    pub source_agent: AgentId,
    pub timestamp: f64,
}

impl<T: Scalar> Detection<T> {
    pub fn position(&self) -> Vector3<T> {
        self.centroid.position
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrackerConfig<T: Scalar> {
    pub gate_distance: T,
    pub confirm_hits: u32,
    pub delete_misses: u32,
    /// White-noise acceleration standard deviation (m/s²).
    pub process_noise_std: T,
    /// Velocity standard deviation assigned to newly spawned tracks (m/s).
    pub init_velocity_std: T,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            gate_distance: T::lit(4.0),
            confirm_hits: 3,
            delete_misses: 3,
            process_noise_std: T::lit(1.0),
            init_velocity_std: T::lit(5.0),
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    /// Tracker settings used for group tracking at the command center.
    pub fn command_center() -> Self {
        Self { confirm_hits: 2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.gate_distance > T::zero()) {
            return Err("gate_distance must be > 0".into());
        }
        if self.confirm_hits < 1 {
            return Err("confirm_hits must be >= 1".into());
        }
        if self.delete_misses < 1 {
            return Err("delete_misses must be >= 1".into());
        }
        if self.process_noise_std < T::zero() || self.init_velocity_std < T::zero() {
            return Err("noise standard deviations must be >= 0".into());
        }
        Ok(())
    }
}

/// Longitudinal object estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Track<T: Scalar> {
    pub id: u64,
    /// (x, y, z, vx, vy, vz) in `frame`.
    pub mean: Vector6<T>,
    pub covariance: Covariance<T>,
    pub extent: Vector3<T>,
    pub yaw: T,
    pub hits: u32,
    pub misses_in_a_row: u32,
    pub confirmed: bool,
    pub last_update: f64,
    pub owner: AgentId,
    pub frame: FrameId,
    /// Number of numerical covariance repairs applied to this track.
    #[serde(default)]
    pub repairs: u32,
}

impl<T: Scalar> Track<T> {
    pub fn position(&self) -> Vector3<T> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<T> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    pub fn to_state(&self) -> ObjectState<T> {
        ObjectState {
            position: self.position(),
            velocity: self.velocity(),
            extent: self.extent,
            yaw: self.yaw,
            frame: self.frame.clone(),
            timestamp: self.last_update,
        }
    }

    /// Re-expresses the track in `pose.parent`; `pose.frame` must equal `self.frame`.
    pub fn transformed(&self, pose: &Pose<T>) -> Track<T> {
        debug_assert_eq!(pose.frame, self.frame);
        let rot: Matrix3<T> = pose.rotation().into_inner();
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&pose.transform_point(&self.position()));
        mean.fixed_rows_mut::<3>(3).copy_from(&(rot * self.velocity()));
        Track {
            mean,
            covariance: self.covariance.rotate_blocks(&rot),
            yaw: normalize_angle(self.yaw + pose.yaw),
            frame: pose.parent.clone(),
            ..self.clone()
        }
    }
}

/// Constant-velocity transition matrix.
pub fn cv_transition<T: Scalar>(dt: T) -> DMatrix<T> {
    let mut f = DMatrix::identity(STATE_DIM, STATE_DIM);
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Discretized white-noise-acceleration process covariance.
pub fn cv_process_noise<T: Scalar>(dt: T, accel_std: T) -> DMatrix<T> {
    let q = accel_std * accel_std;
    let dt2 = dt * dt;
    let pp = dt2 * dt2 / T::lit(4.0) * q;
    let pv = dt2 * dt / T::lit(2.0) * q;
    let vv = dt2 * q;
    let mut m = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for i in 0..3 {
        m[(i, i)] = pp;
        m[(i, i + 3)] = pv;
        m[(i + 3, i)] = pv;
        m[(i + 3, i + 3)] = vv;
    }
    m
}

/// Position-only measurement matrix `[I 0]`.
pub fn position_measurement<T: Scalar>() -> DMatrix<T> {
    let mut h = DMatrix::zeros(MEAS_DIM, STATE_DIM);
    for i in 0..3 {
        h[(i, i)] = T::one();
    }
    h
}

/// Output of a linear Kalman measurement update.
#[derive(Debug, Clone)]
pub struct KalmanUpdate<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: Covariance<T>,
    pub gain: DMatrix<T>,
    /// True when the posterior covariance needed PSD repair.
    pub repaired: bool,
}

/// `x' = F x`, `P' = F P F^T + Q`.
pub fn kalman_predict<T: Scalar>(
    mean: &DVector<T>,
    cov: &DMatrix<T>,
    f: &DMatrix<T>,
    q: &DMatrix<T>,
) -> (DVector<T>, DMatrix<T>) {
    (f * mean, f * cov * f.transpose() + q)
}

/// Linear Kalman measurement update in Joseph form.
pub fn kalman_update<T: Scalar>(
    mean: &DVector<T>,
    cov: &DMatrix<T>,
    z: &DVector<T>,
    h: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<KalmanUpdate<T>, TrackingError> {
    let n = mean.len();
    if cov.shape() != (n, n) || h.ncols() != n || h.nrows() != z.len() || r.shape() != (z.len(), z.len())
    {
        return Err(TrackingError::Dimension(format!(
            "state {n}, cov {:?}, H {:?}, z {}, R {:?}",
            cov.shape(),
            h.shape(),
            z.len(),
            r.shape()
        )));
    }
    let s = h * cov * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(TrackingError::SingularInnovation)?;
    let gain = cov * h.transpose() * s_inv;
    let innovation = z - h * mean;
    let new_mean = mean + &gain * innovation;
    let i_kh = DMatrix::identity(n, n) - &gain * h;
    let joseph = &i_kh * cov * i_kh.transpose() + &gain * r * gain.transpose();
    let (covariance, repaired) = Covariance::repaired(&joseph);
    Ok(KalmanUpdate { mean: new_mean, covariance, gain, repaired })
}

/// Constant-velocity propagation of a track to `to_time`.
pub fn predict<T: Scalar>(
    track: &Track<T>,
    to_time: f64,
    process_noise_std: T,
) -> Result<Track<T>, TrackingError> {
    let dt = to_time - track.last_update;
    if dt < 0.0 {
        return Err(TrackingError::TemporalOrder { from: track.last_update, to: to_time });
    }
    let dt = T::lit(dt);
    let f = cv_transition(dt);
    let q = cv_process_noise(dt, process_noise_std);
    let mean = DVector::from_column_slice(track.mean.as_slice());
    let (m, p) = kalman_predict(&mean, track.covariance.matrix(), &f, &q);
    let (covariance, repaired) = Covariance::repaired(&p);
    let mut out = track.clone();
    out.mean = Vector6::from_column_slice(m.as_slice());
    out.covariance = covariance;
    out.last_update = to_time;
    if repaired {
        out.repairs += 1;
    }
    Ok(out)
}

/// Result of associating tracks with detections.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    /// `(track index, detection index)`.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Gated optimal assignment on Euclidean centroid distance.
pub fn assign<T: Scalar>(tracks: &[Track<T>], detections: &[Detection<T>], gate: T) -> Association {
    let tp: Vec<_> = tracks.iter().map(Track::position).collect();
    let dp: Vec<_> = detections.iter().map(Detection::position).collect();
    let a = solve_gated(&distance_matrix(&tp, &dp), gate);
    Association {
        pairs: a.pairs,
        unmatched_tracks: a.unmatched_rows,
        unmatched_detections: a.unmatched_cols,
    }
}

/// Kalman position update of `track` with `det`; extent and yaw are copied
/// from the detection.
pub fn update<T: Scalar>(track: &Track<T>, det: &Detection<T>) -> Result<Track<T>, TrackingError> {
    let mean = DVector::from_column_slice(track.mean.as_slice());
    let z = DVector::from_column_slice(det.position().as_slice());
    let ku = kalman_update(
        &mean,
        track.covariance.matrix(),
        &z,
        &position_measurement(),
        det.measurement_noise.matrix(),
    )?;
    let mut out = track.clone();
    out.mean = Vector6::from_column_slice(ku.mean.as_slice());
    out.covariance = ku.covariance;
    if ku.repaired {
        out.repairs += 1;
    }
    out.extent = det.centroid.extent;
    out.yaw = det.centroid.yaw;
    out.hits += 1;
    out.misses_in_a_row = 0;
    out.last_update = out.last_update.max(det.timestamp);
    Ok(out)
}

/// Single-agent multi-object tracker.
#[derive(Debug, Clone)]
pub struct Tracker<T: Scalar> {
    pub config: TrackerConfig<T>,
    owner: AgentId,
    frame: FrameId,
    tracks: Vec<Track<T>>,
    next_id: u64,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(config: TrackerConfig<T>, owner: AgentId, frame: FrameId) -> Self {
        Self { config, owner, frame, tracks: Vec::new(), next_id: 0 }
    }

    /// All live tracks, tentative included.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn confirmed(&self) -> Vec<Track<T>> {
        self.tracks.iter().filter(|t| t.confirmed).cloned().collect()
    }

    pub fn frame(&self) -> &FrameId {
        &self.frame
    }

    fn spawn(&mut self, det: &Detection<T>) -> Track<T> {
        let mut cov = DMatrix::zeros(STATE_DIM, STATE_DIM);
        cov.view_mut((0, 0), (3, 3)).copy_from(det.measurement_noise.matrix());
        let vv = self.config.init_velocity_std * self.config.init_velocity_std;
        for i in 3..6 {
            cov[(i, i)] = vv;
        }
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&det.position());
        let id = self.next_id;
        self.next_id += 1;
        Track {
            id,
            mean,
            covariance: Covariance::new_unchecked(cov),
            extent: det.centroid.extent,
            yaw: det.centroid.yaw,
            hits: 1,
            misses_in_a_row: 0,
            confirmed: self.config.confirm_hits <= 1,
            last_update: det.timestamp,
            owner: self.owner,
            frame: self.frame.clone(),
            repairs: 0,
        }
    }

    /// predict → assign → update → age/delete → spawn; returns confirmed tracks.
    ///
    /// Detections must already be expressed in the tracker frame.
    pub fn step(&mut self, detections: &[Detection<T>], now: f64) -> Vec<Track<T>> {
        let q = self.config.process_noise_std;
        for t in &mut self.tracks {
            if now >= t.last_update {
                if let Ok(p) = predict(t, now, q) {
                    *t = p;
                }
            }
        }
        let assoc = assign(&self.tracks, detections, self.config.gate_distance);
        for &(ti, di) in &assoc.pairs {
            match update(&self.tracks[ti], &detections[di]) {
                Ok(mut t) => {
                    if t.hits >= self.config.confirm_hits {
                        t.confirmed = true;
                    }
                    self.tracks[ti] = t;
                }
                Err(_) => self.tracks[ti].misses_in_a_row += 1,
            }
        }
        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].misses_in_a_row += 1;
        }
        let delete_at = self.config.delete_misses;
        self.tracks.retain(|t| t.misses_in_a_row < delete_at);
        for &di in &assoc.unmatched_detections {
            let t = self.spawn(&detections[di]);
            self.tracks.push(t);
        }
        self.confirmed()
    }
}
