use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::seq::SliceRandom;
use rand::Rng;

use cfsim::adversary::{select_targets_uncoordinated, AdversaryParams};
use cfsim::assignment::solve_gated;
use cfsim::bus::{BoundedTimeQueue, Bus, ChannelModel, NodeId, RemapRule, StampedMessage, Topic};
use cfsim::config::{Registry, RunManifest};
use cfsim::fusion::{ci_pair, ci_trace, collate, fuse_ci, TrackBatch};
use cfsim::launch::launch;
use cfsim::metrics::{evaluate_run, EvalConfig};
use cfsim::montecarlo::{run_monte_carlo, Cell, McConfig, McResult, MetricsRecord};
use cfsim::rng::{stream, Domain, StreamRng};
use cfsim::scenario::{sense, sensing_stream, GroundTruthFrame, SensorModel, TruthObject};
use cfsim::sim::{run, SimConfig};
use cfsim::{AgentId, Covariance, FrameId, ObjectState, Pose, Track};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Written straight to stderr so the lines survive output capture.
fn report(n: usize, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "criterion {n:>2} {tag}: {name}: {}", v.detail).unwrap();
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let mut m = RunManifest::default();
    m.adversary.n_compromised = 2;
    let reg = Registry::standard();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    launch(&m, &reg, Some(d1.path())).unwrap();
    launch(&m, &reg, Some(d2.path())).unwrap();
    let same = ["metrics.csv", "events.jsonl"]
        .iter()
        .all(|f| fs::read(d1.path().join(f)).unwrap() == fs::read(d2.path().join(f)).unwrap());

    let config = RunManifest::default().sim_config(&reg).unwrap();
    let agents = config.scenario.n_infrastructure + 1;
    let start = Instant::now();
    let out = run(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        same && secs < 30.0 && out.frames.len() == 300 && agents == 5,
        format!("artifacts identical = {same}, {agents}-agent {}-frame run took {secs:.2} s", out.frames.len()),
    )
}

fn occlusion() -> Verdict {
    let config = RunManifest::default().sim_config(&Registry::standard()).unwrap();
    let out = run(&config).unwrap();
    let scenario = cfsim::scenario::generate_scenario(&config.scenario).unwrap();
    let eval = EvalConfig::default();
    let frames: Vec<_> = evaluate_run(&scenario, &out, &[], &eval)
        .into_iter()
        .filter(|f| f.timestamp >= eval.eval_from)
        .collect();
    let n = frames.len() as f64;
    let ego_fn = frames.iter().map(|f| f.ego_local.fn_ as f64).sum::<f64>() / n;
    let cc_fn = frames.iter().map(|f| f.cc.fn_ as f64).sum::<f64>() / n;
    let ercc_fn_ioe = cc_fn - ego_fn;
    verdict(
        cc_fn <= 0.5 * ego_fn && ercc_fn_ioe < 0.0,
        format!("mean FN cc = {cc_fn:.2}, ego = {ego_fn:.2} (ratio {:.2}), ERCCFNIoE = {ercc_fn_ioe:.2}", cc_fn / ego_fn),
    )
}

fn monte_carlo() -> McResult {
    let config = McConfig {
        base: RunManifest::default().sim_config(&Registry::standard()).unwrap(),
        cells: Cell::grid(&[1, 2, 3]),
        seeds: McConfig::seeds_from(0, 10),
        eval: EvalConfig::default(),
    };
    config.validate().unwrap();
    run_monte_carlo(&config).unwrap()
}

fn cell<'a>(mc: &'a McResult, id: &str) -> &'a MetricsRecord {
    mc.records.iter().find(|r| r.run_id == id).unwrap()
}

fn fp_scaling(mc: &McResult) -> Verdict {
    let fp: Vec<f64> = (1..=3).map(|k| cell(mc, &format!("UC-{k}")).metrics["ERCCFPIoB"].mean).collect();
    let increasing = fp[0] < fp[1] && fp[1] < fp[2];
    let linear = (2..=3).all(|k| fp[k - 1] >= 0.6 * k as f64 * fp[0]);
    let seeds = cell(mc, "UC-1").metrics["ERCCFPIoB"].n;
    verdict(
        increasing && linear && seeds == 10,
        format!("UC-1..3 ERCCFPIoB = {:.2}, {:.2}, {:.2} over {seeds} seeds", fp[0], fp[1], fp[2]),
    )
}

fn coordinated_below(mc: &McResult) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [2, 3] {
        let c = &cell(mc, &format!("C-{k}")).metrics["ERCCFPIoB"];
        let uc = &cell(mc, &format!("UC-{k}")).metrics["ERCCFPIoB"];
        let pooled = ((c.std * c.std + uc.std * uc.std) / 2.0).sqrt();
        pass &= c.mean < uc.mean;
        parts.push(format!("k={k}: C {:.2} vs UC {:.2} (gap {:.2} pooled std)", c.mean, uc.mean, (uc.mean - c.mean) / pooled));
    }
    verdict(pass, parts.join("; "))
}

fn fn_resilience(mc: &McResult) -> Verdict {
    let worst = mc
        .records
        .iter()
        .map(|r| (r.run_id.as_str(), r.metrics["ERCCFNIoB"].mean))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    verdict(worst.1 <= 1.0, format!("largest mean ERCCFNIoB = {:.2} ({})", worst.1, worst.0))
}

fn mirror(mc: &McResult) -> Verdict {
    let mut frames = 0;
    let mut bad = 0;
    for r in &mc.runs {
        for f in &r.frames {
            frames += 1;
            if f.values["ERCCTPIoB"] != -f.values["ERCCFNIoB"] {
                bad += 1;
            }
        }
    }
    verdict(bad == 0 && frames > 0, format!("{bad} mismatches over {frames} frames of {} runs", mc.runs.len()))
}

fn random_spd(rng: &mut StreamRng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * 0.05
}

fn ci_suite() -> Verdict {
    let mut worst_gap: f64 = 0.0;
    let mut psd = true;
    let mut passthrough: f64 = 0.0;
    for n in [2, 6] {
        for i in 0..100 {
            let mut rng = stream(i, Domain::Test, n as u64, 7);
            let (p1, p2) = (random_spd(&mut rng, n), random_spd(&mut rng, n));
            let x1 = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let x2 = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let (c1, c2) = (Covariance::new(p1.clone()).unwrap(), Covariance::new(p2.clone()).unwrap());
            let fused = ci_pair(&x1, &c1, &x2, &c2).unwrap();

            let (a, b) = (p1.clone().try_inverse().unwrap(), p2.clone().try_inverse().unwrap());
            let grid = (0..=10_000)
                .map(|k| k as f64 * 1e-4)
                .min_by(|u, v| ci_trace(&a, &b, *u).unwrap().total_cmp(&ci_trace(&a, &b, *v).unwrap()))
                .unwrap();
            worst_gap = worst_gap.max((fused.omega - grid).abs());

            let m = fused.covariance.matrix();
            let asym = (m - m.transpose()).abs().max();
            let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
            psd &= asym <= 1e-9 && min_eig >= -1e-12;

            let same = ci_pair(&x1, &c1, &x1, &c1).unwrap();
            let single = fuse_ci(&[(x1.clone(), c1.clone())]).unwrap();
            for (mean, cov) in [(&same.mean, same.covariance.matrix()), (&single.mean, single.covariance.matrix())] {
                passthrough = passthrough.max((mean - &x1).abs().max()).max((cov - &p1).abs().max());
            }
        }
    }
    verdict(
        worst_gap <= 1e-3 && psd && passthrough <= 1e-9,
        format!("max |omega - grid| = {worst_gap:.2e}, PSD = {psd}, pass-through error = {passthrough:.1e}"),
    )
}

/// Maximum number of gated pairs, then minimum cost, over all partial matchings.
fn exhaustive(cost: &DMatrix<f64>, gate: f64) -> (usize, f64) {
    let n = cost.ncols();
    let mut best = (0usize, 0.0f64);
    let mut perm: Vec<usize> = (0..n).collect();
    permute(0, &mut perm, &mut |p| {
        let chosen: Vec<f64> = p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).filter(|c| *c <= gate).collect();
        let key = (chosen.len(), chosen.iter().sum::<f64>());
        if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
            best = key;
        }
    });
    best
}

fn permute(k: usize, p: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(k + 1, p, visit);
        p.swap(k, i);
    }
}

fn assignment_suite() -> Verdict {
    let mut instances = 0;
    let mut bad = 0;
    for seed in 0..500u64 {
        let mut rng = stream(seed, Domain::Test, 5, 5);
        let cost = DMatrix::from_fn(5, 5, |_, _| rng.random_range(0.0..10.0));
        for gate in [f64::MAX, 6.0, 3.0] {
            instances += 1;
            let a = solve_gated(&cost, gate);
            let (count, total) = exhaustive(&cost, gate);
            let gated = a.pairs.iter().all(|&(i, j)| cost[(i, j)] <= gate);
            let sum: f64 = a.pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
            if !gated || a.pairs.len() != count || (sum - total).abs() > 1e-9 || (a.cost - total).abs() > 1e-9 {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("{bad} of {instances} 5x5 instances disagree with the permutation oracle"))
}

fn queue_matches_sort(seed: u64) -> bool {
    let mut rng = stream(seed, Domain::Test, 9, 0);
    let cap = rng.random_range(1..12);
    let mut q = BoundedTimeQueue::new(cap);
    let mut oracle: Vec<(f64, u64)> = Vec::new();
    for seq in 0..200u64 {
        if rng.random_bool(0.6) {
            let ts = rng.random_range(0..50) as f64 * 0.1;
            let evicted = q.push(ts, seq);
            oracle.push((ts, seq));
            oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect = (oracle.len() > cap).then(|| oracle.remove(0).0);
            if evicted != expect {
                return false;
            }
        } else {
            let expect = (!oracle.is_empty()).then(|| oracle.remove(0));
            if q.pop() != expect {
                return false;
            }
        }
    }
    true
}

fn schedule(seed: u64, interpose: bool) -> Vec<(u64, String, String)> {
    let mut bus: Bus<String> = Bus::new(seed);
    let topic = Topic::new("tracks/2");
    bus.register_topic(topic.clone());
    bus.subscribe(&topic, NodeId::new("cc"), None).unwrap();
    if interpose {
        bus.register_node(NodeId::new("adversary:2"));
        bus.add_remap(RemapRule {
            original: topic.clone(),
            interceptor: NodeId::new("adversary:2"),
            republished: Topic::new("tracks/2/raw"),
        })
        .unwrap();
    }
    let mut got = Vec::new();
    for k in 0..100 {
        let t = k as f64 * 0.1;
        let msg = StampedMessage { topic: topic.clone(), source: NodeId::new("agent:2"), timestamp: t, payload: format!("b{k}") };
        bus.publish(msg, ChannelModel::wireless()).unwrap();
        bus.step(t + 0.1 - 1e-9, |d, out| {
            if d.subscriber.as_str() == "adversary:2" {
                out.forward(d, topic.clone(), d.msg.payload.clone());
            } else {
                got.push((d.time.to_bits(), d.msg.source.to_string(), d.msg.payload.clone()));
            }
        })
        .unwrap();
    }
    got
}

fn batch(agent: u32, t: f64, rng: &mut StreamRng) -> TrackBatch<f64> {
    let frame = FrameId::agent(AgentId(agent));
    let pose = Pose::new(FrameId::world(), frame.clone(), Vector3::new(agent as f64 * 10.0, 0.0, 0.0), 0.3, 0.0, 0.0, 0.0);
    let tracks = (0..3)
        .map(|id| Track {
            id,
            mean: Vector6::from_fn(|_, _| rng.random_range(-20.0..20.0)),
            covariance: Covariance::from_diagonal(&[1.0; 6]),
            extent: Vector3::new(4.5, 1.9, 1.6),
            yaw: 0.0,
            hits: 3,
            misses_in_a_row: 0,
            confirmed: true,
            last_update: t,
            owner: AgentId(agent),
            frame: frame.clone(),
            repairs: 0,
        })
        .collect();
    TrackBatch { agent: AgentId(agent), timestamp: t, frame_pose: pose, tracks }
}

fn collation_order_free(seed: u64) -> bool {
    let mut rng = stream(seed, Domain::Test, 3, 3);
    let mut msgs = Vec::new();
    for agent in 1..=4u32 {
        let offset = rng.random_range(0.0..0.05);
        for k in 0..8 {
            let t = k as f64 * 0.1 + offset;
            msgs.push(batch(agent, t, &mut rng));
        }
    }
    let mut shuffled = msgs.clone();
    shuffled.shuffle(&mut rng);
    let fill = |list: &[TrackBatch<f64>]| {
        let mut queues: BTreeMap<AgentId, BoundedTimeQueue<TrackBatch<f64>>> = BTreeMap::new();
        for b in list {
            queues.entry(b.agent).or_default().push(b.timestamp, b.clone());
        }
        queues
    };
    let (mut a, mut b) = (fill(&msgs), fill(&shuffled));
    (0..10).all(|k| {
        let now = 0.2 + k as f64 * 0.1;
        collate(&mut a, now, 0.15) == collate(&mut b, now, 0.15)
    })
}

fn identity_adversary_run() -> bool {
    let mut config: SimConfig = RunManifest::default().sim_config(&Registry::standard()).unwrap();
    config.scenario.duration = 8.0;
    config.adversary.n_compromised = 2;
    config.adversary.fp_poisson_lambda = 0.0;
    config.adversary.fn_fraction = 0.0;
    let attacked = run(&config).unwrap();
    let baseline = run(&config.baseline()).unwrap();
    !attacked.compromised.is_empty() && attacked.frames == baseline.frames
}

fn bus_suite() -> Verdict {
    let queue = (0..1000).filter(|&s| queue_matches_sort(s)).count();
    let transparent = (0..20).all(|s| {
        let direct = schedule(s, false);
        !direct.is_empty() && direct == schedule(s, true)
    });
    let end_to_end = identity_adversary_run();
    let collation = (0..50).all(collation_order_free);
    verdict(
        queue == 1000 && transparent && end_to_end && collation,
        format!(
            "queue {queue}/1000 match sort, identity remap transparent = {transparent} (in simulator = {end_to_end}), out-of-order collation identical = {collation}"
        ),
    )
}

fn calibration() -> Verdict {
    let params = AdversaryParams { fp_poisson_lambda: 5.0, ..AdversaryParams::default() };
    let n = 10_000;
    let total: usize = (0..n)
        .map(|epoch| {
            let mut rng = params.rng(42, AgentId(1), epoch);
            select_targets_uncoordinated(&[], &Vector3::zeros(), &params, &mut rng, 2.0).fp_targets.len()
        })
        .sum();
    let k_mean = total as f64 / n as f64;

    let model = SensorModel { clutter_rate: 0.0, ..SensorModel::ego() };
    let observer = Pose::new(FrameId::world(), FrameId::sensor(AgentId(0)), Vector3::new(0.0, 0.0, 1.8), 0.0, 0.0, 0.0, 0.0);
    let object = ObjectState {
        position: Vector3::new(12.0, 3.0, 0.8),
        velocity: Vector3::zeros(),
        extent: Vector3::new(4.5, 1.9, 1.6),
        yaw: 0.0,
        frame: FrameId::world(),
        timestamp: 0.0,
    };
    let truth = GroundTruthFrame {
        index: 0,
        timestamp: 0.0,
        objects: vec![TruthObject { id: 1, state: object }],
        agent_poses: BTreeMap::from([(AgentId(0), observer.clone())]),
    };
    let hits: usize = (0..n as usize)
        .map(|i| sense(AgentId(0), &observer, &model, &truth, &mut sensing_stream(9, AgentId(0), i)).len())
        .sum();
    let freq = hits as f64 / n as f64;
    verdict(
        (k_mean - params.fp_poisson_lambda).abs() <= 0.1 && (freq - model.detection_prob).abs() <= 0.02,
        format!("k_FP mean = {k_mean:.3} (lambda {}), detection frequency = {freq:.4} (p {})", params.fp_poisson_lambda, model.detection_prob),
    )
}

fn zero_adversary_equivalence() -> Verdict {
    let reg = Registry::standard();
    let mut baseline = RunManifest::default();
    baseline.snapshot_frames = vec![50, 150];
    let mut zero = baseline.clone();
    zero.adversary.n_compromised = 0;
    zero.adversary.coordinated = true;
    zero.adversary.fp_poisson_lambda = 9.0;
    zero.adversary.fn_fraction = 0.5;
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    launch(&baseline, &reg, Some(d1.path())).unwrap();
    launch(&zero, &reg, Some(d2.path())).unwrap();
    let (a, b) = (files_under(d1.path()), files_under(d2.path()));
    let differing: BTreeSet<&String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    verdict(differing.is_empty(), format!("{} artifacts compared, differing: {differing:?}", a.len()))
}

#[test]
fn acceptance() {
    let mc = monte_carlo();
    let results = [
        ("determinism and runtime", determinism()),
        ("occlusion mitigation", occlusion()),
        ("uncoordinated false-positive scaling", fp_scaling(&mc)),
        ("coordinated below uncoordinated", coordinated_below(&mc)),
        ("false-negative resilience", fn_resilience(&mc)),
        ("true-positive mirror identity", mirror(&mc)),
        ("covariance intersection oracle", ci_suite()),
        ("assignment oracle", assignment_suite()),
        ("bus properties", bus_suite()),
        ("Poisson and Bernoulli calibration", calibration()),
        ("zero-adversary equivalence", zero_adversary_equivalence()),
    ];
    for (i, (name, v)) in results.iter().enumerate() {
        report(i + 1, name, v);
    }
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, (_, v))| !v.pass).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
