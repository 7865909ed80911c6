use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memgan::harness::commands::{self, Outcome};
use memgan::harness::config::{RunConfig, TopologyChoice};
use memgan::{DeviceSpec, Error, Result};

/// Memristive DCGAN accelerator simulator.
#[derive(Debug, Parser)]
#[command(name = "memgan", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Device preset (`wo2`) or a TOML file of device parameters.
    #[arg(long, global = true)]
    device: Option<String>,
    /// `reference-small`, `reference-full` or a topology file.
    #[arg(long, global = true)]
    topology: Option<String>,
    /// Whole dataset, full-size topology, at least 50 epochs.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a GAN, writing per-epoch grids, metrics and a checkpoint.
    Train,
    /// Sample images from a trained checkpoint.
    Generate,
    /// Quality versus programming variability at fixed levels.
    SweepVariability,
    /// Quality versus number of device levels.
    SweepLevels,
    /// Sample grids and quality at selected epochs.
    SnapshotEpochs,
    /// Training time, write power and CMOS cost tables.
    Cost,
    /// Mean sneak-path leakage versus idle-row noise.
    Leakage,
}

fn load_device(arg: &str) -> Result<DeviceSpec> {
    if arg == "wo2" {
        return Ok(DeviceSpec::wo2());
    }
    let path = PathBuf::from(arg);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    let spec: DeviceSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(d) = &cli.device {
        cfg.device = load_device(d)?;
    }
    if let Some(t) = &cli.topology {
        cfg.topology = TopologyChoice::from(t.clone());
    }
    if cli.full_scale || cfg.full_scale {
        cfg.apply_full_scale();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Generate => commands::generate(&cfg),
        Command::SweepVariability => commands::sweep_variability(&cfg),
        Command::SweepLevels => commands::sweep_levels(&cfg),
        Command::SnapshotEpochs => commands::snapshot_epochs(&cfg),
        Command::Cost => commands::cost(&cfg),
        Command::Leakage => commands::leakage(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.name());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
