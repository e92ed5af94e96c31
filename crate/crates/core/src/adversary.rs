//! Attack nodes: uncoordinated detection manipulation and coordinated track
//! manipulation directed by a coordinator.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, Vector3, Vector6};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{distance_matrix, solve_gated};
use crate::fusion::{cluster_tracks, TrackBatch};
use crate::geometry::{AgentId, Covariance, FrameId, ObjectState, Pose};
use crate::messages::DetectionBatch;
use crate::rng::{poisson_count, stream, Domain, StreamRng};
use crate::scenario::CAR_EXTENT;
use crate::tracking::{Detection, Track};

/// Ids of injected items start here so they never collide with real ones.
pub const SPOOF_ID_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryParams {
    pub n_compromised: usize,
    pub fp_poisson_lambda: f64,
    pub fn_fraction: f64,
    pub coordinated: bool,
    /// Meters.
    pub max_fp_distance: f64,
    /// Seconds; targets are first selected at the first frame at or after it.
    pub onset: f64,
    /// Re-select targets this often (seconds); `None` keeps the onset targets.
    pub refresh_period: Option<f64>,
    /// Assignment gate between payload items and false-negative targets.
    pub fn_gate: f64,
    /// Upper bound on the speed of injected targets (m/s).
    pub fp_max_speed: f64,
    /// Mixed into the run seed for adversary streams.
    pub seed: u64,
}

impl Default for AdversaryParams {
    fn default() -> Self {
        Self {
            n_compromised: 0,
            fp_poisson_lambda: 5.0,
            fn_fraction: 0.2,
            coordinated: false,
            max_fp_distance: 50.0,
            onset: 2.0,
            refresh_period: None,
            fn_gate: 4.0,
            fp_max_speed: 1.0,
            seed: 0,
        }
    }
}

impl AdversaryParams {
    pub fn validate(&self, attackable: usize) -> Result<(), String> {
        if self.n_compromised > attackable {
            return Err(format!(
                "n_compromised = {} exceeds the {attackable} attackable agents",
                self.n_compromised
            ));
        }
        if !(0.0..=1.0).contains(&self.fn_fraction) {
            return Err("fn_fraction must be in [0, 1]".into());
        }
        if !(self.fp_poisson_lambda >= 0.0) {
            return Err("fp_poisson_lambda must be >= 0".into());
        }
        if !(self.max_fp_distance >= 0.0) || !(self.fn_gate > 0.0) || !(self.fp_max_speed >= 0.0) {
            return Err("distances, gates and speeds must be non-negative".into());
        }
        if !(self.onset >= 0.0) {
            return Err("onset must be >= 0".into());
        }
        if let Some(p) = self.refresh_period {
            if !(p > 0.0) {
                return Err("refresh_period must be > 0".into());
            }
        }
        Ok(())
    }

    /// The adversary stream for one host agent.
    pub fn rng(&self, run_seed: u64, agent: AgentId, epoch: u64) -> StreamRng {
        stream(run_seed ^ self.seed.rotate_left(17), Domain::Adversary, agent.0 as u64, epoch)
    }

    pub fn coordinator_rng(&self, run_seed: u64, epoch: u64) -> StreamRng {
        stream(run_seed ^ self.seed.rotate_left(17), Domain::Coordinator, 0, epoch)
    }
}

/// World-frame targets to inject (false positives) and delete (false negatives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackDirective {
    pub fp_targets: Vec<ObjectState<f64>>,
    pub fn_targets: Vec<ObjectState<f64>>,
    pub issue_time: f64,
}

impl AttackDirective {
    pub fn empty(issue_time: f64) -> Self {
        Self { fp_targets: Vec::new(), fn_targets: Vec::new(), issue_time }
    }

    pub fn is_empty(&self) -> bool {
        self.fp_targets.is_empty() && self.fn_targets.is_empty()
    }
}

/// What one application changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Application {
    /// Ids of payload items deleted.
    pub removed: Vec<u64>,
    /// Number of injected items.
    pub appended: usize,
}

fn fp_target<R: Rng>(rng: &mut R, centre: &Vector3<f64>, params: &AdversaryParams, t: f64) -> ObjectState<f64> {
    let r = params.max_fp_distance * rng.random::<f64>().sqrt();
    let b = rng.random::<f64>() * TAU;
    let speed = params.fp_max_speed * rng.random::<f64>();
    let heading = rng.random::<f64>() * TAU;
    let position = Vector3::new(centre.x + r * b.cos(), centre.y + r * b.sin(), CAR_EXTENT[2] / 2.0);
    ObjectState {
        position,
        velocity: Vector3::new(heading.cos(), heading.sin(), 0.0) * speed,
        extent: Vector3::from(CAR_EXTENT),
        yaw: crate::geometry::normalize_angle(heading),
        frame: FrameId::world(),
        timestamp: t,
    }
}

fn fn_count(r: f64, n: usize) -> usize {
    ((r * n as f64).round() as usize).min(n)
}

/// Per-agent selection: `k_FP ~ Poisson(λ)` spoofs around the agent and the
/// first `round(r·|D|)` detections (in id order) as deletion targets.
///
/// `detections` must already be in the world frame.
pub fn select_targets_uncoordinated<R: Rng>(
    detections: &[ObjectState<f64>],
    agent_position: &Vector3<f64>,
    params: &AdversaryParams,
    rng: &mut R,
    now: f64,
) -> AttackDirective {
    let k_fp = poisson_count(rng, params.fp_poisson_lambda);
    let k_fn = fn_count(params.fn_fraction, detections.len());
    let fp_targets = (0..k_fp).map(|_| fp_target(rng, agent_position, params, now)).collect();
    let fn_targets = detections[..k_fn].to_vec();
    AttackDirective { fp_targets, fn_targets, issue_time: now }
}

/// Coordinator selection over every adversary's uncompromised report.
///
/// Reports are aligned to `now` in the world frame and clustered with
/// `assign_radius`; `k_FN = round(r·#clusters)` clusters are chosen without
/// replacement and one global `k_FP ~ Poisson(λ)` spoofs are each placed
/// around a uniformly chosen reporting agent.
pub fn select_targets_coordinated<R: Rng>(
    reports: &BTreeMap<AgentId, TrackBatch<f64>>,
    params: &AdversaryParams,
    assign_radius: f64,
    rng: &mut R,
    now: f64,
) -> AttackDirective {
    if reports.is_empty() {
        return AttackDirective::empty(now);
    }
    let aligned: BTreeMap<AgentId, Vec<Track<f64>>> = reports
        .iter()
        .map(|(a, b)| {
            let tracks = b
                .world_tracks()
                .into_iter()
                .map(|mut t| {
                    let dt = now - t.last_update;
                    if dt > 0.0 {
                        let v = t.velocity();
                        let mut p = t.mean.fixed_rows_mut::<3>(0);
                        p += v * dt;
                        t.last_update = now;
                    }
                    t
                })
                .collect();
            (*a, tracks)
        })
        .collect();
    let clusters = cluster_tracks(&aligned, assign_radius);
    let k_fp = poisson_count(rng, params.fp_poisson_lambda);
    let k_fn = fn_count(params.fn_fraction, clusters.len());
    let agents: Vec<&TrackBatch<f64>> = reports.values().collect();
    let fp_targets = (0..k_fp)
        .map(|_| {
            let host = agents[rng.random_range(0..agents.len())];
            fp_target(rng, &host.frame_pose.position, params, now)
        })
        .collect();
    let mut picks = sample(rng, clusters.len(), k_fn).into_vec();
    picks.sort_unstable();
    let fn_targets = picks
        .into_iter()
        .map(|i| {
            let c = &clusters[i];
            let n = c.members.len() as f64;
            let velocity = c.members.iter().map(|(_, t)| t.velocity()).sum::<Vector3<f64>>() / n;
            let first = &c.members[0].1;
            ObjectState {
                position: c.centroid,
                velocity,
                extent: first.extent,
                yaw: first.yaw,
                frame: FrameId::world(),
                timestamp: now,
            }
        })
        .collect();
    AttackDirective { fp_targets, fn_targets, issue_time: now }
}

/// Frame-agnostic core of [`apply`]: returns indices of items to delete and
/// the world-frame spoofs to inject.
///
/// With `follow`, each matched deletion target snaps to its matched item so
/// it keeps tracking a moving object.
pub fn apply_world(
    items: &[Vector3<f64>],
    directive: &mut AttackDirective,
    agent_position: &Vector3<f64>,
    params: &AdversaryParams,
    now: f64,
    follow: bool,
) -> (Vec<usize>, Vec<ObjectState<f64>>) {
    let mut removed = Vec::new();
    if !directive.fn_targets.is_empty() && !items.is_empty() {
        let predicted: Vec<Vector3<f64>> =
            directive.fn_targets.iter().map(|t| t.propagated(now).position).collect();
        let cost: DMatrix<f64> = distance_matrix(&predicted, items);
        let a = solve_gated(&cost, params.fn_gate);
        for &(ti, ii) in &a.pairs {
            removed.push(ii);
            if follow {
                let target = &mut directive.fn_targets[ti];
                let dt = now - target.timestamp;
                if dt > 0.0 {
                    let measured = (items[ii] - target.position) / dt;
                    target.velocity = (target.velocity + measured) * 0.5;
                    target.velocity.z = 0.0;
                }
                target.position = items[ii];
                target.timestamp = now;
            }
        }
        removed.sort_unstable();
    }
    let spoofs = directive
        .fp_targets
        .iter()
        .map(|t| t.propagated(now))
        .filter(|t| (t.position.xy() - agent_position.xy()).norm() <= params.max_fp_distance)
        .collect();
    (removed, spoofs)
}

/// Manipulates a detection batch in place of the host's sensor output.
pub fn apply_to_detections(
    batch: &DetectionBatch,
    directive: &mut AttackDirective,
    params: &AdversaryParams,
    follow: bool,
) -> (DetectionBatch, Application) {
    if directive.is_empty() {
        return (batch.clone(), Application::default());
    }
    let pose = &batch.sensor_pose;
    let world: Vec<Vector3<f64>> = batch.detections.iter().map(|d| pose.transform_point(&d.position())).collect();
    let (removed, spoofs) = apply_world(&world, directive, &pose.position, params, batch.timestamp, follow);
    let noise = batch
        .detections
        .first()
        .map(|d| d.measurement_noise.clone())
        .unwrap_or_else(|| Covariance::isotropic(3, 0.04));
    let to_sensor = pose.inverse();
    let mut out = batch.clone();
    out.detections = batch
        .detections
        .iter()
        .enumerate()
        .filter(|(i, _)| removed.binary_search(i).is_err())
        .map(|(_, d)| d.clone())
        .collect();
    let appended = spoofs.len();
    for (j, s) in spoofs.into_iter().enumerate() {
        out.detections.push(Detection {
            id: SPOOF_ID_BASE + j as u64,
            centroid: ObjectState {
                position: to_sensor.transform_point(&s.position),
                velocity: Vector3::zeros(),
                extent: s.extent,
                yaw: crate::geometry::normalize_angle(s.yaw - pose.yaw),
                frame: pose.frame.clone(),
                timestamp: batch.timestamp,
            },
            measurement_noise: noise.clone(),
            source_agent: batch.agent,
            timestamp: batch.timestamp,
        });
    }
    let removed = removed.iter().map(|&i| batch.detections[i].id).collect();
    (out, Application { removed, appended })
}

/// Manipulates a track batch on its way to the command center.
pub fn apply_to_tracks(
    batch: &TrackBatch<f64>,
    directive: &mut AttackDirective,
    params: &AdversaryParams,
    follow: bool,
) -> (TrackBatch<f64>, Application) {
    if directive.is_empty() {
        return (batch.clone(), Application::default());
    }
    let pose: &Pose<f64> = &batch.frame_pose;
    let world: Vec<Vector3<f64>> = batch.tracks.iter().map(|t| pose.transform_point(&t.position())).collect();
    let (removed, spoofs) = apply_world(&world, directive, &pose.position, params, batch.timestamp, follow);
    let covariance = batch
        .tracks
        .iter()
        .min_by(|a, b| a.covariance.trace().total_cmp(&b.covariance.trace()))
        .map(|t| t.covariance.clone())
        .unwrap_or_else(|| Covariance::from_diagonal(&[0.05, 0.05, 0.05, 0.5, 0.5, 0.5]));
    let inv = pose.inverse();
    let frame = batch.tracks.first().map(|t| t.frame.clone()).unwrap_or_else(|| pose.frame.clone());
    let mut out = batch.clone();
    out.tracks = batch
        .tracks
        .iter()
        .enumerate()
        .filter(|(i, _)| removed.binary_search(i).is_err())
        .map(|(_, t)| t.clone())
        .collect();
    let appended = spoofs.len();
    for (j, s) in spoofs.into_iter().enumerate() {
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&inv.transform_point(&s.position));
        mean.fixed_rows_mut::<3>(3).copy_from(&inv.transform_vector(&s.velocity));
        out.tracks.push(Track {
            id: SPOOF_ID_BASE + j as u64,
            mean,
            covariance: covariance.clone(),
            extent: s.extent,
            yaw: crate::geometry::normalize_angle(s.yaw - pose.yaw),
            hits: 10,
            misses_in_a_row: 0,
            confirmed: true,
            last_update: batch.timestamp,
            owner: batch.agent,
            frame: frame.clone(),
            repairs: 0,
        });
    }
    let removed = removed.iter().map(|&i| batch.tracks[i].id).collect();
    (out, Application { removed, appended })
}

/// One line of the attack audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AttackEvent {
    Select {
        time: f64,
        agent: Option<AgentId>,
        fp_targets: Vec<[f64; 3]>,
        fn_targets: Vec<[f64; 3]>,
    },
    Apply {
        time: f64,
        agent: AgentId,
        removed: Vec<u64>,
        appended: usize,
    },
}

impl AttackEvent {
    pub fn select(agent: Option<AgentId>, d: &AttackDirective) -> Self {
        let pts = |v: &[ObjectState<f64>]| v.iter().map(|s| [s.position.x, s.position.y, s.position.z]).collect();
        AttackEvent::Select { time: d.issue_time, agent, fp_targets: pts(&d.fp_targets), fn_targets: pts(&d.fn_targets) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FrameId;
    use crate::scenario::CAR_EXTENT;
    use crate::tracking::Detection;

    fn state(x: f64, y: f64) -> ObjectState<f64> {
        ObjectState::new(Vector3::new(x, y, 0.8), Vector3::zeros(), Vector3::from(CAR_EXTENT), 0.0, FrameId::world(), 1.0)
            .unwrap()
    }

    fn det_batch(points: &[(f64, f64)]) -> DetectionBatch {
        let frame = FrameId::sensor(AgentId(1));
        let pose = Pose::new(FrameId::world(), frame.clone(), Vector3::new(5.0, 0.0, 0.0), 0.0, 0.0, 0.0, 1.0);
        let detections = points
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Detection {
                id: i as u64,
                centroid: ObjectState { frame: frame.clone(), ..state(*x, *y) },
                measurement_noise: Covariance::isotropic(3, 0.04),
                source_agent: AgentId(1),
                timestamp: 1.0,
            })
            .collect();
        DetectionBatch { agent: AgentId(1), frame_index: 10, timestamp: 1.0, sensor_pose: pose, detections }
    }

    fn rng() -> StreamRng {
        stream(1, Domain::Test, 0, 0)
    }

    #[test]
    fn zero_rates_give_empty_directive() {
        let p = AdversaryParams { fp_poisson_lambda: 0.0, fn_fraction: 0.0, ..Default::default() };
        let d = select_targets_uncoordinated(&[state(1.0, 1.0)], &Vector3::zeros(), &p, &mut rng(), 2.0);
        assert!(d.is_empty());
    }

    #[test]
    fn full_negation() {
        let p = AdversaryParams { fp_poisson_lambda: 0.0, fn_fraction: 1.0, ..Default::default() };
        let dets: Vec<_> = (0..4).map(|i| state(i as f64 * 10.0, 0.0)).collect();
        let d = select_targets_uncoordinated(&dets, &Vector3::zeros(), &p, &mut rng(), 2.0);
        assert_eq!(d.fn_targets.len(), 4);
    }

    #[test]
    fn fn_targets_are_first_in_id_order() {
        let p = AdversaryParams { fp_poisson_lambda: 0.0, fn_fraction: 0.2, ..Default::default() };
        let dets: Vec<_> = (0..10).map(|i| state(i as f64 * 10.0, 0.0)).collect();
        let d = select_targets_uncoordinated(&dets, &Vector3::zeros(), &p, &mut rng(), 2.0);
        assert_eq!(d.fn_targets, dets[..2].to_vec());
    }

    #[test]
    fn poisson_mean_over_onset_draws() {
        let p = AdversaryParams::default();
        let n = 10_000;
        let total: usize = (0..n)
            .map(|k| {
                let mut r = p.rng(k, AgentId(1), 0);
                select_targets_uncoordinated(&[], &Vector3::zeros(), &p, &mut r, 2.0).fp_targets.len()
            })
            .sum();
        assert!((total as f64 / n as f64 - 5.0).abs() < 0.1);
    }

    #[test]
    fn fp_targets_stay_in_disk() {
        let p = AdversaryParams { fp_poisson_lambda: 50.0, ..Default::default() };
        let centre = Vector3::new(10.0, -3.0, 15.0);
        let d = select_targets_uncoordinated(&[], &centre, &p, &mut rng(), 2.0);
        for t in &d.fp_targets {
            assert!((t.position.xy() - centre.xy()).norm() <= p.max_fp_distance);
            assert!(t.velocity.norm() <= p.fp_max_speed);
        }
    }

    #[test]
    fn empty_directive_is_bitwise_passthrough() {
        let b = det_batch(&[(10.0, 0.0), (20.0, 5.0)]);
        let (out, app) = apply_to_detections(&b, &mut AttackDirective::empty(0.0), &AdversaryParams::default(), true);
        assert_eq!(serde_json::to_string(&out).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(app, Application::default());
    }

    #[test]
    fn fn_target_on_detection_removes_only_it() {
        let b = det_batch(&[(10.0, 0.0), (20.0, 5.0), (30.0, -5.0)]);
        // Sensor sits at x = 5, so local (20, 5) is world (25, 5).
        let mut d = AttackDirective { fp_targets: vec![], fn_targets: vec![state(25.0, 5.0)], issue_time: 1.0 };
        let (out, app) = apply_to_detections(&b, &mut d, &AdversaryParams::default(), true);
        assert_eq!(app.removed, vec![1]);
        assert_eq!(out.detections.len(), 2);
        assert_eq!(out.detections[0], b.detections[0]);
        assert_eq!(out.detections[1], b.detections[2]);
    }

    #[test]
    fn fp_distance_gate_boundary() {
        let p = AdversaryParams::default();
        let b = det_batch(&[]);
        let inside = state(5.0 + p.max_fp_distance, 0.0);
        let outside = state(5.0 + p.max_fp_distance + 1.0, 0.0);
        let mut d = AttackDirective { fp_targets: vec![inside, outside], fn_targets: vec![], issue_time: 1.0 };
        let (out, app) = apply_to_detections(&b, &mut d, &p, true);
        assert_eq!(app.appended, 1);
        let world = b.sensor_pose.transform_point(&out.detections[0].position());
        assert!((world - Vector3::new(55.0, 0.0, 0.8)).norm() < 1e-9);
        assert_eq!(out.detections[0].id, SPOOF_ID_BASE);
    }

    #[test]
    fn following_target_tracks_moving_item() {
        let p = AdversaryParams::default();
        let mut d = AttackDirective { fp_targets: vec![], fn_targets: vec![state(25.0, 0.0)], issue_time: 1.0 };
        for k in 0..30 {
            let t = 1.0 + k as f64 * 0.1;
            let mut b = det_batch(&[(20.0 + 3.0 * (t - 1.0), 0.0)]);
            b.timestamp = t;
            let (out, app) = apply_to_detections(&b, &mut d, &p, true);
            assert!(out.detections.is_empty(), "lost at step {k}");
            assert_eq!(app.removed.len(), 1);
        }
    }

    fn track_batch(agent: u32, pose_x: f64, pts: &[(f64, f64)]) -> TrackBatch<f64> {
        let frame = FrameId::agent(AgentId(agent));
        let tracks = pts
            .iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let mut mean = Vector6::zeros();
                mean[0] = *x - pose_x;
                mean[1] = *y;
                mean[3] = 1.0;
                Track {
                    id: i as u64,
                    mean,
                    covariance: Covariance::isotropic(6, 0.1),
                    extent: Vector3::from(CAR_EXTENT),
                    yaw: 0.0,
                    hits: 5,
                    misses_in_a_row: 0,
                    confirmed: true,
                    last_update: 3.0,
                    owner: AgentId(agent),
                    frame: frame.clone(),
                    repairs: 0,
                }
            })
            .collect();
        TrackBatch {
            agent: AgentId(agent),
            timestamp: 3.0,
            frame_pose: Pose::new(FrameId::world(), frame, Vector3::new(pose_x, 0.0, 15.0), 0.0, 0.0, 0.0, 3.0),
            tracks,
        }
    }

    #[test]
    fn coordinated_selection_traced_by_hand() {
        // Three adversaries all see the same ten well-separated objects.
        let objects: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 10.0, 5.0)).collect();
        let reports: BTreeMap<AgentId, TrackBatch<f64>> =
            (1..=3).map(|a| (AgentId(a), track_batch(a, a as f64 * -7.0, &objects))).collect();
        let p = AdversaryParams { fp_poisson_lambda: 0.0, fn_fraction: 0.2, coordinated: true, ..Default::default() };
        let d = select_targets_coordinated(&reports, &p, 2.0, &mut rng(), 3.0);
        assert_eq!(d.fn_targets.len(), 2);
        for t in &d.fn_targets {
            assert!(objects.iter().any(|(x, y)| (t.position.xy() - nalgebra::Vector2::new(*x, *y)).norm() < 1e-9));
            assert!((t.velocity - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn coordinated_directive_is_shared() {
        let objects: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 10.0, 5.0)).collect();
        let reports: BTreeMap<AgentId, TrackBatch<f64>> =
            (1..=2).map(|a| (AgentId(a), track_batch(a, 0.0, &objects))).collect();
        let p = AdversaryParams { coordinated: true, fn_fraction: 0.5, ..Default::default() };
        let d = select_targets_coordinated(&reports, &p, 2.0, &mut rng(), 3.0);
        let (mut d1, mut d2) = (d.clone(), d.clone());
        let (o1, a1) = apply_to_tracks(&reports[&AgentId(1)], &mut d1, &p, false);
        let (o2, a2) = apply_to_tracks(&reports[&AgentId(2)], &mut d2, &p, false);
        assert_eq!(d1, d2);
        assert_eq!(a1, a2);
        assert_eq!(o1.tracks.len(), o2.tracks.len());
        assert_eq!(a1.removed.len(), 3);
    }

    #[test]
    fn single_reporter_reduces_to_single_view() {
        let objects: Vec<(f64, f64)> = (0..5).map(|i| (i as f64 * 10.0, 5.0)).collect();
        let reports = BTreeMap::from([(AgentId(1), track_batch(1, 0.0, &objects))]);
        let p = AdversaryParams { fn_fraction: 0.4, ..Default::default() };
        let d = select_targets_coordinated(&reports, &p, 2.0, &mut rng(), 3.0);
        assert_eq!(d.fn_targets.len(), 2);
        assert!(select_targets_coordinated(&BTreeMap::new(), &p, 2.0, &mut rng(), 3.0).is_empty());
    }

    #[test]
    fn compromised_count_bounded_by_attackable() {
        let p = AdversaryParams { n_compromised: 5, ..Default::default() };
        assert!(p.validate(4).is_err());
        assert!(AdversaryParams { n_compromised: 4, ..Default::default() }.validate(4).is_ok());
    }
}
