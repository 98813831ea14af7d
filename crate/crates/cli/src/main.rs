//! `specprobe`: generate data, train spectral probes, evaluate them and
//! compare their learned frequency profiles.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or model error. Diagnostics go
//! to stderr; stdout carries only JSON payloads.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectral_probe::data::TaskKind;
use spectral_probe::training::ModeSpec;
use spectral_probe::FilterBand;

#[derive(Debug, Parser)]
#[command(name = "specprobe", version, about = "Learnable spectral probing of embedding sequences")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted frequency structure
    Gen(GenArgs),
    /// Train probes, one per seed
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Export the learned filter profile of auto-mode checkpoints
    Profile(ProfileArgs),
    /// Build the overlap matrix of several learned profiles
    Compare(CompareArgs),
    /// Convert JSON-lines embedding dumps to the binary dataset format
    Import(ImportArgs),
}

/// Parses `lo:hi` or one of the named bands.
fn parse_band(s: &str) -> Result<FilterBand, String> {
    if let Some((lo, hi)) = s.split_once(':') {
        let lo: usize = lo.trim().parse().map_err(|_| format!("invalid band start in '{s}'"))?;
        let hi: usize = hi.trim().parse().map_err(|_| format!("invalid band end in '{s}'"))?;
        FilterBand::new(lo, hi).map_err(|e| e.to_string())
    } else {
        s.parse().map_err(|e: spectral_probe::filters::UnknownBand| e.to_string())
    }
}

pub(crate) fn parse_mode(s: &str) -> Result<ModeSpec, String> {
    s.parse().map_err(|e: spectral_probe::filters::UnknownBand| {
        if s.starts_with("fixed:") {
            e.to_string()
        } else {
            format!("unknown mode '{s}' (expected orig, fixed:<band> or auto)")
        }
    })
}

fn parse_kind(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Optional second file receiving `--val-count` extra sequences drawn
    /// from the same classes.
    #[arg(long, requires = "val_count")]
    val_out: Option<PathBuf>,
    #[arg(long, requires = "val_out")]
    val_count: Option<usize>,
    /// Sequence length.
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Embedding width.
    #[arg(long, default_value_t = 16)]
    e: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, value_parser = parse_band, default_value = "0:1")]
    signal_band: FilterBand,
    #[arg(long, value_parser = parse_band, default_value = "130:511")]
    noise_band: FilterBand,
    /// Signal-to-noise RMS ratio; `inf` disables noise.
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, value_parser = parse_kind, default_value = "sequence")]
    task_kind: TaskKind,
    #[arg(long, default_value_t = 1932)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    task: String,
    #[arg(long, default_value = "")]
    language: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModeSpec>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// TOML file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds (default 1932,2771,7308,8119,9095).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Canonical filter length for auto mode.
    #[arg(long)]
    filter_len: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// One or more auto-mode checkpoints; several are averaged.
    #[arg(long = "checkpoint", required = true, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also render SVG plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// `LABEL=ckpt[,ckpt...]` groups or bare checkpoint paths (labelled from
    /// their metadata).
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// One row per checkpoint instead of one per seed-averaged group.
    #[arg(long)]
    per_seed: bool,
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long, value_parser = parse_kind)]
    task_kind: TaskKind,
    #[arg(long, default_value = "")]
    task: String,
    #[arg(long, default_value = "")]
    language: String,
}

/// Errors split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<spectral_probe::Error> for Failure {
    fn from(e: spectral_probe::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    // Built explicitly so no environment variable influences a run.
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();

    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a, &argv),
        Command::Train(a) => commands::train(a, &argv),
        Command::Eval(a) => commands::eval(a),
        Command::Profile(a) => commands::profile(a, &argv),
        Command::Compare(a) => commands::compare(a, &argv),
        Command::Import(a) => commands::import(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
