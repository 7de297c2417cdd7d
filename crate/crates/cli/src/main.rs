//! `npsa` — synthesize, demodulate, and spectrally analyze nonuniform
//! phase-shifted fringe stacks.
//!
//! Exit codes: 0 success, 2 bad input, 3 degenerate data, 4 I/O or format
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npsa_core::error::Error;

#[derive(Parser)]
#[command(name = "npsa", version, about = "Nonuniform phase-shifting demodulation and filter analysis")]
struct Cli {
    /// Base seed for stochastic synthesis.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Report serialization format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Plain,
    Corrected,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a fringe stack and write it with ground-truth sidecars.
    Synth(SynthArgs),
    /// Demodulate a stack; write phase map, preview, Lissajous, and report.
    Demod(DemodArgs),
    /// Evaluate the frequency transfer function of the chosen filter.
    Analyze(AnalyzeArgs),
    /// Side-by-side plain / corrected / least-squares comparison.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output stack path (default: <out-dir>/stack.npsa).
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene: tilt, sphere, peaks, or canonical tilt-8 / sphere-4.
    #[arg(long)]
    scene: Option<String>,
    /// Square size in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Spatial fringes across the field.
    #[arg(long)]
    fringes: Option<f64>,
    #[arg(long)]
    background: Option<f64>,
    #[arg(long)]
    modulation: Option<f64>,
    /// Comma-separated steps in radians, e.g. "0,1.49,5.13".
    #[arg(long)]
    steps: Option<String>,
    /// Bundled step sets: paper3 or paper9.
    #[arg(long)]
    preset: Option<String>,
    /// Harmonic distortion terms "k:amplitude,...", e.g. "2:0.5".
    #[arg(long)]
    harmonics: Option<String>,
    /// AWGN variance per pixel per frame.
    #[arg(long)]
    eta: Option<f64>,
    /// Quantize intensities to 2^bits levels before writing.
    #[arg(long)]
    quantize: Option<u8>,
    /// Skip the ground-truth and metadata sidecars.
    #[arg(long)]
    no_truth: bool,
}

#[derive(Args)]
pub struct DemodArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Ground-truth phase (raw f64) for error statistics; defaults to the
    /// synth sidecar when present.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Maximum Lissajous points written.
    #[arg(long, default_value_t = 4096)]
    max_lissajous: usize,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Steps override for stacks stored without them.
    #[arg(long)]
    steps: Option<String>,
    /// Frequency grid half-width.
    #[arg(long, default_value_t = 3.5)]
    omega_max: f64,
    /// Frequency grid spacing.
    #[arg(long, default_value_t = 0.005)]
    omega_step: f64,
    /// Harmonic truncation order for the robustness figure.
    #[arg(long, default_value_t = npsa_core::DEFAULT_K_MAX)]
    k_max: u32,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    stack: PathBuf,
    /// Ground-truth phase override (raw f64).
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) => 4,
        e if e.is_degenerate_data() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not configure {} threads: {e}", cli.threads);
            return ExitCode::from(2);
        }
    }

    let result = match &cli.command {
        Command::Synth(args) => commands::cmd_synth(args, &cli.out_dir, cli.seed),
        Command::Demod(args) => commands::cmd_demod(args, &cli.out_dir, cli.format),
        Command::Analyze(args) => commands::cmd_analyze(args, &cli.out_dir, cli.format),
        Command::Compare(args) => commands::cmd_compare(args, &cli.out_dir, cli.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
