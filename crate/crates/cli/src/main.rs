use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use owl_core::artifacts::{parse_reports, score_artifacts};
use owl_core::mapping::map_from_str;
use owl_core::mission::{run_mission_with, MissionConfig, MissionError, MissionOutcome};
use owl_core::ply::write_ply;
use owl_core::world::{generate_tunnel_world, load_world, save_world, TunnelSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_ENDURANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "owl", version, about = "Deterministic subterranean exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one mission and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "owl-run")]
        out: PathBuf,
    },
    /// Generate a tunnel world from a JSON spec.
    Genworld {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score artifact reports against a world's ground truth.
    Score {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        tol: f64,
    },
    /// Convert a run's map dump to another format.
    ExportMap {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = MapFormat::Ply)]
        format: MapFormat,
        /// Defaults to map.ply inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapFormat {
    Ply,
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<MissionError> for Failure {
    fn from(e: MissionError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn config_err(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_CONFIG, error }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, &out),
        Command::Genworld { spec, seed, out } => genworld(&spec, seed, &out).map_err(config_err),
        Command::Score { reports, world, tol } => score(&reports, &world, tol).map_err(config_err),
        Command::ExportMap { run, format, out } => export_map(&run, format, out).map_err(config_err),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("owl: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = MissionConfig::load(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let result = run_mission_with(&cfg, Some(out))?;
    result.write_outputs(out)?;
    let m = &result.metrics;
    println!(
        "{}",
        serde_json::to_string_pretty(m).expect("metrics serialize")
    );
    if m.outcome == MissionOutcome::EnduranceExhausted {
        return Err(Failure {
            code: EXIT_ENDURANCE,
            error: anyhow::anyhow!("endurance exhausted {:.1} m from home", m.final_distance_to_home),
        });
    }
    Ok(())
}

fn genworld(spec: &Path, seed: u64, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: TunnelSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    let world = generate_tunnel_world(&spec, seed)?;
    save_world(&world, out)?;
    eprintln!(
        "wrote {} ({} free voxels, {} artifacts)",
        out.display(),
        world.air_count(),
        world.artifacts().len()
    );
    Ok(())
}

fn score(reports: &Path, world: &Path, tol: f64) -> anyhow::Result<()> {
    anyhow::ensure!(tol > 0.0, "tol must be positive");
    let text = fs::read_to_string(reports).with_context(|| format!("reading {}", reports.display()))?;
    let reports = parse_reports(&text).map_err(anyhow::Error::msg)?;
    let world = load_world(world)?;
    let s = score_artifacts(&reports, world.artifacts(), tol);
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(())
}

fn export_map(run: &Path, format: MapFormat, out: Option<PathBuf>) -> anyhow::Result<()> {
    let src = run.join("map.owlmap");
    let text = fs::read_to_string(&src).with_context(|| format!("reading {}", src.display()))?;
    let dump = map_from_str(&text)?;
    match format {
        MapFormat::Ply => {
            let out = out.unwrap_or_else(|| run.join("map.ply"));
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let points = dump.occupied_centers();
            write_ply(std::io::BufWriter::new(file), &points)?;
            eprintln!("wrote {} occupied voxels to {}", points.len(), out.display());
        }
    }
    Ok(())
}
