//! `bwe` command-line front end: argument grammar, WAV I/O and the five
//! commands, callable in-process through [`run`].

pub mod commands;
pub mod error;
pub mod wav;

use std::io::Write;
use std::path::PathBuf;

use bwe_core::{CrossoverVariant, ResampleMethod};
use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_bench, cmd_degrade, cmd_enhance, cmd_eval, cmd_mask, BenchReport, DegradeOutcome,
    EnhanceOutcome,
};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bwe", version, about = "Audio bandwidth extension to 48 kHz")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extend band-limited WAV files to 48 kHz.
    Enhance(EnhanceArgs),
    /// Simulate a band-limited recording from 48 kHz audio.
    Degrade(DegradeArgs),
    /// Score estimates against a reference; one JSON line per estimate.
    Eval(EvalArgs),
    /// Time generation plus refinement on synthetic noise.
    Bench(BenchArgs),
    /// Print the crossover mask as CSV.
    Mask(MaskArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Weight file; without it a seeded random model is used.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: physical cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CrossoverArgs {
    /// Band-limit of the input in Hz, overriding the WAV header.
    #[arg(long)]
    pub input_rate: Option<u32>,
    #[arg(long)]
    pub f_start: Option<f64>,
    #[arg(long)]
    pub f_end: Option<f64>,
    /// smoothstep-lr, naive-brickwall or butterworth4.
    #[arg(long)]
    pub variant: Option<CrossoverVariant>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output path (single input only).
    #[arg(short, long, conflicts_with = "output_dir")]
    pub output: Option<PathBuf>,
    /// Directory receiving one output per input, same file name.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub crossover: CrossoverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateChoice {
    Fixed(u32),
    Random,
}

impl std::str::FromStr for RateChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("random") {
            return Ok(RateChoice::Random);
        }
        s.parse()
            .map(RateChoice::Fixed)
            .map_err(|_| format!("expected a rate in Hz or `random`, got `{s}`"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DegradeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Target rate in Hz, or `random` for one of 8000/12000/16000.
    #[arg(long, default_value = "random")]
    pub rate: RateChoice,
    /// sinc, zoh or linear.
    #[arg(long, default_value = "sinc")]
    pub method: ResampleMethod,
    #[arg(long)]
    pub quant_bits: Option<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub pcm16: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub reference: PathBuf,
    #[arg(required = true)]
    pub estimates: Vec<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub crossover: CrossoverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Seconds of synthetic audio per item.
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub crossover: CrossoverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub crossover: CrossoverArgs,
    /// Shorthand for --input-rate.
    #[arg(long, conflicts_with = "input_rate")]
    pub rate: Option<u32>,
    #[arg(long, default_value_t = 2048)]
    pub n_fft: usize,
}

/// Runs a parsed command, writing results to `out` and diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Enhance(args) => {
            let outcomes = cmd_enhance(&args, err)?;
            for o in outcomes {
                writeln!(
                    err,
                    "{} -> {} (input {} Hz, crossover {:.1}..{:.1} Hz {}, {:.3} s)",
                    o.input.display(),
                    o.output.display(),
                    o.input_rate,
                    o.crossover.f_start,
                    o.crossover.f_end,
                    o.crossover.variant,
                    o.elapsed_s
                )?;
            }
        }
        Command::Degrade(args) => {
            let o = cmd_degrade(&args)?;
            writeln!(
                err,
                "{} -> {} ({} Hz, {})",
                args.input.display(),
                args.output.display(),
                o.rate,
                args.method
            )?;
        }
        Command::Eval(args) => {
            let reports = cmd_eval(&args, err)?;
            for r in reports {
                writeln!(out, "{}", serde_json::to_string(&r).map_err(io_err)?)?;
            }
        }
        Command::Bench(args) => {
            let report = cmd_bench(&args, err)?;
            writeln!(out, "{}", serde_json::to_string(&report).map_err(io_err)?)?;
        }
        Command::Mask(args) => cmd_mask(&args, out)?,
    }
    Ok(())
}

fn io_err(e: serde_json::Error) -> CliError {
    CliError::Io(e.to_string())
}
