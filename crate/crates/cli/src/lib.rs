//! Command-line front end: `train`, `compress`, `decompress`, `eval`,
//! `gradcheck`, `ablate` and `visualize`.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors (anything
//! wrong with the supplied arguments, detected before work starts), 3 for
//! failures while working (divergence, corrupt bitstreams, I/O).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
pub mod config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "EASN_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

/// Errors raised once work is under way are runtime failures, except an
/// unknown tap, which is a bad argument.
impl From<easn::Error> for CliError {
    fn from(e: easn::Error) -> Self {
        match e {
            easn::Error::UnknownTap { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "easn", version, about = "Learned image compression with adaptive scaling normalization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write weights, a per-epoch log and a validation RD summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `paths.out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for initialization and training, overriding both config seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Compress an image and print its bits per pixel.
    Compress {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        image: PathBuf,
    },
    /// Reconstruct an image from a bitstream.
    Decompress {
        #[arg(long)]
        weights: PathBuf,
        /// Output image (.png, .ppm or .pnm).
        #[arg(long)]
        out: PathBuf,
        bitstream: PathBuf,
    },
    /// Rate and PSNR of every image in a directory, plus their mean.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        /// CSV destination; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        dir: PathBuf,
    },
    /// Finite-difference check of every layer, the loss and the transforms.
    Gradcheck {
        /// Restrict to one variant's layers and model.
        #[arg(long)]
        variant: Option<String>,
        /// First of the five seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Train several variants under one config and compare them.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated variants; every model variant when omitted.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// High-frequency maps of scaling-branch inputs.
    Visualize {
        /// Repeat to compare models on the same image.
        #[arg(long, required = true)]
        weights: Vec<PathBuf>,
        /// Capture point; repeatable. Defaults to the first encoder block.
        #[arg(long)]
        tap: Vec<String>,
        /// Flat region `top,left,height,width` in image pixels. Defaults to
        /// the window of lowest image gradient.
        #[arg(long)]
        region: Option<String>,
        #[arg(long)]
        out: PathBuf,
        image: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n = raw
        .to_str()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool built earlier in this process already has its size fixed.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train {
            config,
            out,
            seed,
            variant,
        } => commands::train(&config, config::Overrides { variant, seed, out }),
        Command::Compress { weights, out, image } => commands::compress(&weights, &image, &out),
        Command::Decompress { weights, out, bitstream } => commands::decompress(&weights, &bitstream, &out),
        Command::Eval { weights, out, dir } => commands::eval(&weights, &dir, out.as_deref()),
        Command::Gradcheck {
            variant,
            seed,
            corrupt_backward,
        } => commands::gradcheck(variant.as_deref(), seed, corrupt_backward),
        Command::Ablate {
            config,
            variant,
            out,
            seed,
        } => commands::ablate(&config, &variant, config::Overrides { variant: None, seed, out }),
        Command::Visualize {
            weights,
            tap,
            region,
            out,
            image,
        } => commands::visualize(&weights, &image, &tap, region.as_deref(), &out),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
