use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfsim::config::{ManifestError, Registry, RunManifest};
use cfsim::launch::{launch, read_records, LaunchError};
use cfsim::montecarlo::{render_markdown, run_monte_carlo, write_csv, write_frames_jsonl, Cell, McConfig};
use cfsim::scenario::generate_scenario;
use cfsim::snapshot::{export_snapshot, Picture};

const MANIFEST_ERROR: u8 = 2;
const RUN_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "cfsim", version, about = "Attack simulator for centralized collaborative sensor fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one manifest and its paired baseline.
    Run(RunArgs),
    /// Sweep attack type and adversary count over several seeds.
    Mc(McArgs),
    /// Render frames of a finished run.
    Snapshot(SnapshotArgs),
    /// Parse and build a manifest without running it.
    Validate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Manifest file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of infrastructure agents.
    #[arg(long)]
    agents: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    adversaries: Option<usize>,
    #[arg(long)]
    coordinated: bool,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Adversary counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    adversaries: Vec<usize>,
    /// Sweep only the coordinated attack.
    #[arg(long)]
    coordinated: bool,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PictureArg {
    Ego,
    Cc,
}

#[derive(Args)]
struct SnapshotArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of a finished run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    frame: Vec<usize>,
    #[arg(long, value_enum, default_value = "cc")]
    picture: PictureArg,
}

enum Failure {
    Manifest(String),
    Run(String),
}

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        Failure::Manifest(e.to_string())
    }
}

impl From<LaunchError> for Failure {
    fn from(e: LaunchError) -> Self {
        match e {
            LaunchError::Manifest(m) => Failure::Manifest(m.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn io(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

fn load(common: &Common) -> Result<RunManifest, Failure> {
    let mut m = match &common.config {
        Some(path) => RunManifest::load(path)?,
        None => RunManifest::default(),
    };
    if let Some(seed) = common.seed {
        m.seed = seed;
    }
    if let Some(n) = common.agents {
        m.scenario.n_infrastructure = n;
    }
    Ok(m)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut m = load(&args.common)?;
    if let Some(k) = args.adversaries {
        m.adversary.n_compromised = k;
    }
    if args.coordinated {
        m.adversary.coordinated = true;
    }
    let out = launch(&m, &Registry::standard(), args.out.as_deref())?;
    print!("{}", render_markdown(std::slice::from_ref(&out.record)));
    if let Some(dir) = out.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn mc(args: McArgs) -> Result<(), Failure> {
    let m = load(&args.common)?;
    let base = m.sim_config(&Registry::standard())?;
    let cells = if args.coordinated {
        args.adversaries.iter().map(|&n| Cell { coordinated: true, n_adversaries: n }).collect()
    } else {
        Cell::grid(&args.adversaries)
    };
    let config = McConfig { base, cells, seeds: McConfig::seeds_from(m.seed, args.seeds), eval: m.eval };
    config.validate().map_err(Failure::Manifest)?;
    let result = run_monte_carlo(&config).map_err(Failure::Run)?;
    let table = render_markdown(&result.records);
    print!("{table}");
    if let Some(dir) = args.out.or(m.output_dir) {
        fs::create_dir_all(&dir).map_err(io)?;
        write_csv(&result.records, fs::File::create(dir.join("metrics.csv")).map_err(io)?).map_err(io)?;
        let json = serde_json::to_string_pretty(&result.records).map_err(io)?;
        fs::write(dir.join("metrics.json"), json + "\n").map_err(io)?;
        fs::write(dir.join("table.md"), &table).map_err(io)?;
        let frames = std::io::BufWriter::new(fs::File::create(dir.join("frames.jsonl")).map_err(io)?);
        write_frames_jsonl(&result.runs, frames).map_err(io)?;
    }
    for r in &result.records {
        for f in &r.failures {
            eprintln!("{}: {f}", r.run_id);
        }
    }
    if result.records.iter().any(|r| !r.failures.is_empty()) {
        return Err(Failure::Run("some runs failed".into()));
    }
    Ok(())
}

fn snapshot(args: SnapshotArgs) -> Result<(), Failure> {
    let m = load(&args.common)?;
    let config = m.sim_config(&Registry::standard())?;
    let scenario = generate_scenario(&config.scenario).map_err(io)?;
    let records = read_records(&args.out).map_err(io)?;
    let picture = match args.picture {
        PictureArg::Ego => Picture::EgoLocal,
        PictureArg::Cc => Picture::Cc,
    };
    let dir = args.out.join("snapshots");
    fs::create_dir_all(&dir).map_err(io)?;
    for frame in args.frame {
        let path = dir.join(format!("frame_{frame:04}_{}.png", picture.label()));
        let o = export_snapshot(&path, &scenario, &records, frame, picture, &m.eval).map_err(io)?;
        println!("{} tp={} fp={} fn={}", path.display(), o.tp, o.fp, o.fn_);
    }
    Ok(())
}

fn validate(common: Common) -> Result<(), Failure> {
    let m = load(&common)?;
    let c = m.sim_config(&Registry::standard())?;
    println!(
        "ok: {} infrastructure agents, {} compromised ({}), {} frames",
        c.scenario.n_infrastructure,
        c.adversary.n_compromised,
        if c.adversary.coordinated { "coordinated" } else { "uncoordinated" },
        c.scenario.frame_count()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Mc(a) => mc(a),
        Command::Snapshot(a) => snapshot(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Manifest(m)) => {
            eprintln!("manifest error: {m}");
            ExitCode::from(MANIFEST_ERROR)
        }
        Err(Failure::Run(m)) => {
            eprintln!("run failed: {m}");
            ExitCode::from(RUN_FAILURE)
        }
    }
}
