//! Monte Carlo sweeps over attack type and adversary count with paired seeds.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{
    aggregate_frames, aggregate_runs, evaluate_run, increment_metrics, metric_names, EvalConfig, FrameEval,
    FrameIncrements, Stat,
};
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig};
use crate::sim::{run_scenario, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub coordinated: bool,
    pub n_adversaries: usize,
}

impl Cell {
    pub fn run_id(&self) -> String {
        if self.n_adversaries == 0 {
            return "BL-0".into();
        }
        format!("{}-{}", if self.coordinated { "C" } else { "UC" }, self.n_adversaries)
    }

    /// `{C, UC} × counts`, coordinated rows first.
    pub fn grid(counts: &[usize]) -> Vec<Cell> {
        [true, false]
            .iter()
            .flat_map(|&coordinated| counts.iter().map(move |&n_adversaries| Cell { coordinated, n_adversaries }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub base: SimConfig,
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    pub eval: EvalConfig,
}

impl McConfig {
    /// `n` consecutive seeds starting at `master`.
    pub fn seeds_from(master: u64, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| master.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cells.is_empty() || self.seeds.is_empty() {
            return Err("grid needs at least one cell and one seed".into());
        }
        for c in &self.cells {
            if c.n_adversaries > self.base.scenario.n_infrastructure {
                return Err(format!("{}: more adversaries than infrastructure agents", c.run_id()));
            }
        }
        Ok(())
    }

    fn cell_config(&self, cell: Cell, seed: u64) -> SimConfig {
        let mut c = self.base.clone();
        c.seed = seed;
        c.record_events = false;
        c.debug_cc = false;
        c.adversary.n_compromised = cell.n_adversaries;
        c.adversary.coordinated = cell.coordinated;
        c
    }
}

/// One attacked run, scored against its paired baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub frames: Vec<FrameIncrements>,
    /// Frame-level mean and spread.
    pub stats: BTreeMap<String, Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub coordinated: bool,
    pub n_adversaries: usize,
    /// Mean and spread of per-run means across seeds.
    pub metrics: BTreeMap<String, Stat>,
    /// Mean and spread over all frames of all seeds.
    pub pooled: BTreeMap<String, Stat>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub records: Vec<MetricsRecord>,
    pub runs: Vec<RunRecord>,
}

struct Baseline {
    scenario: Scenario,
    evals: Result<Vec<(Vec<crate::geometry::AgentId>, Vec<FrameEval>)>, String>,
}

fn baseline_for(mc: &McConfig, seed: u64) -> Baseline {
    let cfg = mc.cell_config(Cell { coordinated: false, n_adversaries: 0 }, seed);
    let scenario = match generate_scenario(&ScenarioConfig { seed, ..cfg.scenario.clone() }) {
        Ok(s) => s,
        Err(e) => {
            return Baseline {
                scenario: Scenario { config: cfg.scenario.clone(), agents: Vec::new(), frames: Vec::new() },
                evals: Err(e.to_string()),
            }
        }
    };
    let evals = run_scenario(&cfg, &scenario).map_err(|e| e.to_string()).map(|run| {
        // One evaluation per distinct compromised set in the grid.
        let mut sets: Vec<Vec<_>> = mc.cells.iter().map(|c| mc.cell_config(*c, seed).compromised()).collect();
        sets.sort();
        sets.dedup();
        sets.into_iter()
            .map(|set| {
                let ev = evaluate_run(&scenario, &run, &set, &mc.eval);
                (set, ev)
            })
            .collect()
    });
    Baseline { scenario, evals }
}

fn attacked_run(mc: &McConfig, cell: Cell, seed: u64, base: &Baseline) -> Result<RunRecord, String> {
    let cfg = mc.cell_config(cell, seed);
    let compromised = cfg.compromised();
    let evals = base.evals.as_ref().map_err(|e| format!("baseline seed {seed}: {e}"))?;
    let base_eval = &evals.iter().find(|(s, _)| *s == compromised).ok_or("missing baseline evaluation")?.1;
    let run = run_scenario(&cfg, &base.scenario).map_err(|e| format!("seed {seed}: {e}"))?;
    let ev = evaluate_run(&base.scenario, &run, &compromised, &mc.eval);
    let frames = increment_metrics(&ev, base_eval, &compromised).map_err(|e| format!("seed {seed}: {e}"))?;
    let stats = aggregate_frames(&frames);
    Ok(RunRecord { run_id: cell.run_id(), seed, frames, stats })
}

/// Aggregates the runs of one cell.
pub fn summarize(cell: Cell, runs: &[RunRecord], failures: Vec<String>) -> MetricsRecord {
    let all: Vec<FrameIncrements> = runs.iter().flat_map(|r| r.frames.iter().cloned()).collect();
    MetricsRecord {
        run_id: cell.run_id(),
        coordinated: cell.coordinated && cell.n_adversaries > 0,
        n_adversaries: cell.n_adversaries,
        metrics: aggregate_runs(runs.iter().map(|r| &r.stats)),
        pooled: aggregate_frames(&all),
        failures,
    }
}

/// Runs every cell against a shared baseline per seed. Failures are recorded
/// per cell and the sweep continues.
pub fn run_monte_carlo(mc: &McConfig) -> Result<McResult, String> {
    mc.validate()?;
    let baselines: Vec<Baseline> = mc.seeds.par_iter().map(|&s| baseline_for(mc, s)).collect();
    let jobs: Vec<(usize, usize)> =
        (0..mc.cells.len()).flat_map(|c| (0..mc.seeds.len()).map(move |s| (c, s))).collect();
    let results: Vec<Result<RunRecord, String>> = jobs
        .par_iter()
        .map(|&(c, s)| attacked_run(mc, mc.cells[c], mc.seeds[s], &baselines[s]))
        .collect();

    let mut records = Vec::new();
    let mut runs = Vec::new();
    for (c, cell) in mc.cells.iter().enumerate() {
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for (job, r) in jobs.iter().zip(&results) {
            if job.0 != c {
                continue;
            }
            match r {
                Ok(run) => ok.push(run.clone()),
                Err(e) => failures.push(e.clone()),
            }
        }
        records.push(summarize(*cell, &ok, failures));
        runs.extend(ok);
    }
    Ok(McResult { records, runs })
}

fn max_agents(records: &[MetricsRecord]) -> usize {
    records.iter().map(|r| r.n_adversaries).max().unwrap_or(0)
}

/// One row per cell with `<metric>_mean` and `<metric>_std` columns.
pub fn write_csv<W: Write>(records: &[MetricsRecord], w: W) -> Result<(), csv::Error> {
    let names = metric_names(max_agents(records));
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["run_id".to_string(), "coordinated".into(), "n_adversaries".into(), "seeds".into()];
    for n in &names {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_std"));
    }
    header.push("failures".into());
    out.write_record(&header)?;
    for r in records {
        let seeds = r.metrics.get("ERCCFPIoB").map(|s| s.n).unwrap_or(0);
        let mut row = vec![r.run_id.clone(), r.coordinated.to_string(), r.n_adversaries.to_string(), seeds.to_string()];
        for n in &names {
            match r.metrics.get(n) {
                Some(s) => {
                    row.push(format!("{:.6}", s.mean));
                    row.push(format!("{:.6}", s.std));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        row.push(r.failures.len().to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn table<'a>(records: &[MetricsRecord], columns: impl Iterator<Item = &'a String>) -> String {
    let columns: Vec<&String> = columns.collect();
    let mut s = String::from("| Run ID | Coord? | # Adv |");
    for c in &columns {
        s.push_str(&format!(" {} |", c.replace('_', "\\_")));
    }
    s.push_str("\n|---|---|---|");
    s.push_str(&"---|".repeat(columns.len()));
    s.push('\n');
    for r in records {
        let coord = if r.coordinated { "True" } else { "False" };
        s.push_str(&format!("| {} | {} | {} |", r.run_id, coord, r.n_adversaries));
        for c in &columns {
            match r.metrics.get(*c) {
                Some(st) => s.push_str(&format!(" {st} |")),
                None => s.push_str(" N/A |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Markdown rendering: command-center increments, then per compromised agent.
pub fn render_markdown(records: &[MetricsRecord]) -> String {
    let names = metric_names(max_agents(records));
    let (ercc, ca): (Vec<&String>, Vec<&String>) = names.iter().partition(|n| n.starts_with("ERCC"));
    let mut s = table(records, ercc.into_iter());
    s.push('\n');
    s.push_str(&table(records, ca.into_iter()));
    s
}

/// Per-frame increments as line-delimited JSON.
pub fn write_frames_jsonl<W: Write>(runs: &[RunRecord], mut w: W) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        run_id: &'a str,
        seed: u64,
        #[serde(flatten)]
        frame: &'a FrameIncrements,
    }
    for r in runs {
        for f in &r.frames {
            serde_json::to_writer(&mut w, &Line { run_id: &r.run_id, seed: r.seed, frame: f })?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}
