//! Ground-truth matching and increment-over-baseline metrics.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{distance_matrix, solve_gated};
use crate::geometry::AgentId;
use crate::scenario::{visibility_mask, GroundTruthFrame, Scenario, TruthObject, EGO_ID};
use crate::sim::{propagate_tracks, RunOutput};
use crate::tracking::Track;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("runs are not paired: {0}")]
    Unpaired(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Objects farther than this (ground plane) from the reference agent are not evaluated.
    pub truth_radius: f64,
    pub match_radius: f64,
    /// Frames before this time are skipped.
    pub eval_from: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { truth_radius: 50.0, match_radius: 2.0, eval_from: 2.0 }
    }
}

/// Truth relative to one agent at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    pub reference: AgentId,
    pub timestamp: f64,
    pub objects: Vec<TruthObject>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Estimates matched to objects outside the truth set; counted as neither TP nor FP.
    pub unevaluated: usize,
    /// `(estimate, truth)` index pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// Objects visible, noise-free, to at least one agent.
pub fn visible_to_any(scenario: &Scenario, frame: &GroundTruthFrame) -> Vec<bool> {
    let mut any = vec![false; frame.objects.len()];
    for agent in &scenario.agents {
        let Some(pose) = frame.agent_poses.get(&agent.id) else { continue };
        for (v, seen) in any.iter_mut().zip(visibility_mask(pose, &agent.sensor, frame)) {
            *v |= seen;
        }
    }
    any
}

fn reference_xy(frame: &GroundTruthFrame, agent: AgentId) -> nalgebra::Vector2<f64> {
    frame.agent_poses.get(&agent).map(|p| p.position.xy()).unwrap_or_default()
}

pub fn truth_set(frame: &GroundTruthFrame, visible: &[bool], reference: AgentId, radius: f64) -> TruthSet {
    let c = reference_xy(frame, reference);
    let objects = frame
        .objects
        .iter()
        .zip(visible)
        .filter(|(o, v)| **v && (o.state.position.xy() - c).norm() <= radius)
        .map(|(o, _)| o.clone())
        .collect();
    TruthSet { reference, timestamp: frame.timestamp, objects }
}

/// One-to-one gated min-cost matching on centroid distance.
pub fn match_truth(estimates: &[Vector3<f64>], truth: &[Vector3<f64>], radius: f64) -> FrameOutcome {
    let a = solve_gated(&distance_matrix(estimates, truth), radius);
    FrameOutcome {
        tp: a.pairs.len(),
        fp: estimates.len() - a.pairs.len(),
        fn_: truth.len() - a.pairs.len(),
        unevaluated: 0,
        pairs: a.pairs,
    }
}

/// Role of one drawn box in a scored picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoxClass {
    /// Truth object with a matching estimate.
    TruePositiveTruth,
    /// Estimate with a matching truth object.
    TruePositiveEstimate,
    FalseNegative,
    FalsePositive,
    Unevaluated,
}

/// A picture scored against one agent's truth set, with a class per box.
#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub outcome: FrameOutcome,
    /// One per `frame.objects`.
    pub truth: Vec<BoxClass>,
    /// One per input track.
    pub estimates: Vec<BoxClass>,
    /// Input tracks propagated to the frame time.
    pub propagated: Vec<Track<f64>>,
}

/// Scores a picture against the truth set of `reference`.
///
/// Estimates beyond the truth radius are ignored. Estimates that best match
/// a real object outside the truth set are counted as unevaluated. Outcome
/// pairs index `tracks` and `frame.objects`.
pub fn classify_picture(
    tracks: &[Track<f64>],
    frame: &GroundTruthFrame,
    visible: &[bool],
    reference: AgentId,
    cfg: &EvalConfig,
) -> Classified {
    let c = reference_xy(frame, reference);
    let propagated = propagate_tracks(tracks, frame.timestamp);
    let est_idx: Vec<usize> = (0..propagated.len())
        .filter(|&i| (propagated[i].position().xy() - c).norm() <= cfg.truth_radius)
        .collect();
    let estimates: Vec<Vector3<f64>> = est_idx.iter().map(|&i| propagated[i].position()).collect();
    let reach = cfg.truth_radius + cfg.match_radius;
    let mut in_set = vec![false; frame.objects.len()];
    let mut cand_idx = Vec::new();
    for (i, (o, v)) in frame.objects.iter().zip(visible).enumerate() {
        let d = (o.state.position.xy() - c).norm();
        in_set[i] = *v && d <= cfg.truth_radius;
        if d <= reach {
            cand_idx.push(i);
        }
    }
    let candidates: Vec<Vector3<f64>> = cand_idx.iter().map(|&i| frame.objects[i].state.position).collect();
    let raw = match_truth(&estimates, &candidates, cfg.match_radius);

    let mut truth: Vec<BoxClass> =
        in_set.iter().map(|s| if *s { BoxClass::FalseNegative } else { BoxClass::Unevaluated }).collect();
    let mut est = vec![BoxClass::Unevaluated; tracks.len()];
    for &i in &est_idx {
        est[i] = BoxClass::FalsePositive;
    }
    let mut out = FrameOutcome::default();
    for &(e, t) in &raw.pairs {
        let (ei, ti) = (est_idx[e], cand_idx[t]);
        if in_set[ti] {
            out.tp += 1;
            out.pairs.push((ei, ti));
            truth[ti] = BoxClass::TruePositiveTruth;
            est[ei] = BoxClass::TruePositiveEstimate;
        } else {
            out.unevaluated += 1;
            est[ei] = BoxClass::Unevaluated;
        }
    }
    out.fp = estimates.len() - raw.pairs.len();
    out.fn_ = in_set.iter().filter(|x| **x).count() - out.tp;
    Classified { outcome: out, truth, estimates: est, propagated }
}

pub fn evaluate_picture(
    tracks: &[Track<f64>],
    frame: &GroundTruthFrame,
    visible: &[bool],
    reference: AgentId,
    cfg: &EvalConfig,
) -> FrameOutcome {
    classify_picture(tracks, frame, visible, reference, cfg).outcome
}

/// Outcomes of every scored picture at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub index: usize,
    pub timestamp: f64,
    pub ego_local: FrameOutcome,
    /// The command-center picture redistributed to the ego.
    pub cc: FrameOutcome,
    /// Each agent's tracks as received by the command center, against that agent's truth set.
    pub reported: BTreeMap<AgentId, FrameOutcome>,
}

/// Scores a run; `agents` selects whose reported tracks are evaluated.
pub fn evaluate_run(scenario: &Scenario, run: &RunOutput, agents: &[AgentId], cfg: &EvalConfig) -> Vec<FrameEval> {
    run.frames
        .iter()
        .zip(&scenario.frames)
        .filter(|(r, _)| r.timestamp + 1e-9 >= cfg.eval_from)
        .map(|(r, truth)| {
            let visible = visible_to_any(scenario, truth);
            let reported = agents
                .iter()
                .filter_map(|a| {
                    r.reported.get(a).map(|tr| (*a, evaluate_picture(tr, truth, &visible, *a, cfg)))
                })
                .collect();
            FrameEval {
                index: r.index,
                timestamp: r.timestamp,
                ego_local: evaluate_picture(&r.ego_local, truth, &visible, EGO_ID, cfg),
                cc: evaluate_picture(&r.ego_cc, truth, &visible, EGO_ID, cfg),
                reported,
            }
        })
        .collect()
}

/// Per-frame increments of an attacked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIncrements {
    pub index: usize,
    pub timestamp: f64,
    /// Metric name to value, see [`metric_names`].
    pub values: BTreeMap<String, f64>,
}

pub const ERCC_METRICS: [&str; 6] =
    ["ERCCFNIoB", "ERCCFNIoE", "ERCCFPIoB", "ERCCFPIoE", "ERCCTPIoB", "ERCCTPIoE"];

pub fn ca_metric(kind: &str, ordinal: usize) -> String {
    format!("CA{kind}IoB_agent{ordinal}")
}

/// Column order for up to `max_agents` compromised agents.
pub fn metric_names(max_agents: usize) -> Vec<String> {
    let mut names: Vec<String> = ERCC_METRICS.iter().map(|s| s.to_string()).collect();
    for kind in ["FN", "FP"] {
        names.extend((1..=max_agents).map(|k| ca_metric(kind, k)));
    }
    names
}

fn diff(a: usize, b: usize) -> f64 {
    a as f64 - b as f64
}

/// Frame-by-frame increments of `attacked` over `baseline` and over the ego.
///
/// Compromised-agent metrics are named by the agent's position in
/// `compromised`, starting at 1; a frame missing either side's report is
/// skipped for that agent.
pub fn increment_metrics(
    attacked: &[FrameEval],
    baseline: &[FrameEval],
    compromised: &[AgentId],
) -> Result<Vec<FrameIncrements>, MetricsError> {
    if attacked.len() != baseline.len() {
        return Err(MetricsError::Unpaired(format!("{} vs {} frames", attacked.len(), baseline.len())));
    }
    attacked
        .iter()
        .zip(baseline)
        .map(|(a, b)| {
            if a.index != b.index || a.timestamp.to_bits() != b.timestamp.to_bits() {
                return Err(MetricsError::Unpaired(format!("frame {} vs {}", a.index, b.index)));
            }
            if a.cc.tp + a.cc.fn_ != b.cc.tp + b.cc.fn_ {
                return Err(MetricsError::Unpaired(format!("truth sets differ at frame {}", a.index)));
            }
            let mut values = BTreeMap::new();
            let mut put = |k: &str, v: f64| {
                values.insert(k.to_string(), v);
            };
            put("ERCCFNIoB", diff(a.cc.fn_, b.cc.fn_));
            put("ERCCFNIoE", diff(a.cc.fn_, a.ego_local.fn_));
            put("ERCCFPIoB", diff(a.cc.fp, b.cc.fp));
            put("ERCCFPIoE", diff(a.cc.fp, a.ego_local.fp));
            put("ERCCTPIoB", diff(a.cc.tp, b.cc.tp));
            put("ERCCTPIoE", diff(a.cc.tp, a.ego_local.tp));
            for (i, agent) in compromised.iter().enumerate() {
                if let (Some(x), Some(y)) = (a.reported.get(agent), b.reported.get(agent)) {
                    values.insert(ca_metric("FN", i + 1), diff(x.fn_, y.fn_));
                    values.insert(ca_metric("FP", i + 1), diff(x.fp, y.fp));
                }
            }
            Ok(FrameIncrements { index: a.index, timestamp: a.timestamp, values })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two samples.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std, n }
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} +/- {:.2}", self.mean, self.std)
    }
}

/// Per-metric mean and spread over the frames of one run.
pub fn aggregate_frames(frames: &[FrameIncrements]) -> BTreeMap<String, Stat> {
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for f in frames {
        for (k, v) in &f.values {
            series.entry(k.clone()).or_default().push(*v);
        }
    }
    series.into_iter().map(|(k, xs)| (k, Stat::of(&xs))).collect()
}

/// Per-metric mean and spread of per-run means.
pub fn aggregate_runs<'a>(runs: impl IntoIterator<Item = &'a BTreeMap<String, Stat>>) -> BTreeMap<String, Stat> {
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, s) in r {
            series.entry(k.clone()).or_default().push(s.mean);
        }
    }
    series.into_iter().map(|(k, xs)| (k, Stat::of(&xs))).collect()
}
