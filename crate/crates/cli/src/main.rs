//! `helisample`: sampling design, support analysis and sparse-versus-standard
//! reconstruction runs for helical cone-beam CT.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Config, Preset};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "helisample", version, about)]
struct Cli {
    /// TOML file with [geometry], [phantom], [sampling] and [recon] sections,
    /// overlaid on the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter preset used as the base configuration.
    #[arg(long, value_enum, global = true, default_value = "exp2")]
    preset: Preset,
    /// Directory for outputs; later stages read earlier artifacts from here.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Noise seed, overriding `phantom.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Axial frequencies for `support`, overriding `sampling.omega_v`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    omega_v: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sampling matrices, gain, sample counts and the gain-versus-Omega sweep.
    Design,
    /// Kernel spectra at probe points against the support cross-sections.
    Support,
    /// Simulate sparse and standard lattice acquisitions.
    Scan,
    /// Support-filtered resampling of both acquisitions onto the detector grid.
    Filter,
    /// Reconstruct both filtered sinograms and the reference volume.
    Recon,
    /// Error metrics of both reconstructions against the reference.
    Compare,
    /// Gain ratio and sample reduction over a range of Omega.
    GainCurve,
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = cli.preset.config();
    if let Some(path) = &cli.config {
        cfg = cfg.overlay_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = &cli.omega_v {
        cfg.omega_v = w.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HELISAMPLE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("HELISAMPLE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: &Cli) -> Result<String, CliError> {
    init_threads()?;
    let cfg = resolve(cli)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Design => commands::design(&cfg, out),
        Command::Support => commands::support(&cfg, out),
        Command::Scan => commands::scan(&cfg, out),
        Command::Filter => commands::filter(&cfg, out),
        Command::Recon => commands::recon(&cfg, out),
        Command::Compare => commands::compare(out),
        Command::GainCurve => commands::gain_curve(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("helisample: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
