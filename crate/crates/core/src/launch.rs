//! Runs a manifest end to end and writes its artifacts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ManifestError, Registry, RunManifest};
use crate::metrics::{aggregate_frames, evaluate_run, increment_metrics};
use crate::montecarlo::{render_markdown, summarize, write_csv, write_frames_jsonl, Cell, MetricsRecord, RunRecord};
use crate::scenario::{generate_scenario, Scenario};
use crate::sim::{run_scenario, FrameRecord, RunOutput, SimConfig};
use crate::snapshot::{export_snapshot, Picture};

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("run failed: {0}")]
    Run(String),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
}

pub struct LaunchOutput {
    pub config: SimConfig,
    pub scenario: Scenario,
    pub attacked: RunOutput,
    pub record: MetricsRecord,
    pub run: RunRecord,
    pub out_dir: Option<PathBuf>,
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs the manifest's attacked configuration and its paired baseline.
///
/// With `out_dir` set (or the manifest's own), writes `metrics.csv`,
/// `metrics.json`, `table.md`, `events.jsonl`, `attack.jsonl`,
/// `frames.jsonl`, `records.jsonl` and any requested snapshots.
pub fn launch(manifest: &RunManifest, registry: &Registry, out_dir: Option<&Path>) -> Result<LaunchOutput, LaunchError> {
    let config = manifest.sim_config(registry)?;
    let scenario = generate_scenario(&config.scenario).map_err(|e| LaunchError::Run(e.to_string()))?;
    let baseline = run_scenario(&config.baseline(), &scenario).map_err(|e| LaunchError::Run(e.to_string()))?;
    let attacked = run_scenario(&config, &scenario).map_err(|e| LaunchError::Run(e.to_string()))?;
    let compromised = attacked.compromised.clone();
    let a = evaluate_run(&scenario, &attacked, &compromised, &manifest.eval);
    let b = evaluate_run(&scenario, &baseline, &compromised, &manifest.eval);
    let frames = increment_metrics(&a, &b, &compromised).map_err(|e| LaunchError::Run(e.to_string()))?;
    let cell = Cell { coordinated: config.adversary.coordinated, n_adversaries: config.adversary.n_compromised };
    let run = RunRecord { run_id: cell.run_id(), seed: config.seed, stats: aggregate_frames(&frames), frames };
    let record = summarize(cell, std::slice::from_ref(&run), Vec::new());

    let out_dir = out_dir.map(Path::to_path_buf).or_else(|| manifest.output_dir.clone());
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)?;
        write_csv(std::slice::from_ref(&record), create(dir, "metrics.csv")?)
            .map_err(|e| LaunchError::Io(e.into()))?;
        let mut json = create(dir, "metrics.json")?;
        serde_json::to_writer_pretty(&mut json, &record).map_err(std::io::Error::from)?;
        json.write_all(b"\n")?;
        json.flush()?;
        fs::write(dir.join("table.md"), render_markdown(std::slice::from_ref(&record)))?;
        write_jsonl(&attacked.events, create(dir, "events.jsonl")?)?;
        write_jsonl(&attacked.attack_log, create(dir, "attack.jsonl")?)?;
        let mut f = create(dir, "frames.jsonl")?;
        write_frames_jsonl(std::slice::from_ref(&run), &mut f)?;
        f.flush()?;
        write_jsonl(&attacked.frames, create(dir, "records.jsonl")?)?;
        if !manifest.snapshot_frames.is_empty() {
            let snaps = dir.join("snapshots");
            fs::create_dir_all(&snaps)?;
            for &frame in &manifest.snapshot_frames {
                for picture in [Picture::EgoLocal, Picture::Cc] {
                    let path = snaps.join(format!("frame_{frame:04}_{}.png", picture.label()));
                    export_snapshot(&path, &scenario, &attacked.frames, frame, picture, &manifest.eval)
                        .map_err(|e| LaunchError::Run(e.to_string()))?;
                }
            }
        }
    }
    Ok(LaunchOutput { config, scenario, attacked, record, run, out_dir })
}

/// Reads the per-frame records written by [`launch`].
pub fn read_records(dir: &Path) -> std::io::Result<Vec<FrameRecord>> {
    read_jsonl(BufReader::new(File::open(dir.join("records.jsonl"))?))
}
