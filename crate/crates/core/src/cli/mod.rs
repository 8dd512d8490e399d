//! The `partaog` command line.
//!
//! Exit codes: 0 success, 2 bad usage or input, 3 missing data, 4 contract
//! violation or internal failure.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::error;

use crate::error::Error;
use crate::miner::NkMode;

pub use commands::{
    cmd_eval, cmd_heatmap, cmd_learn, cmd_parse, cmd_synth, cmd_validate, LearnArgs, LearnConfig,
};
pub use manifest::{manifest_path_for, sha256_file, OutputDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_CONTRACT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "partaog", version, about = "Few-shot part localization with And-Or graphs over CNN feature maps")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted part signatures.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grow an AOG from annotated part boxes.
    Learn {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// "auto" or comma-separated counts, top layer first.
        #[arg(long, value_parser = parse_nk)]
        nk: Option<NkMode>,
        #[arg(long)]
        epsilon: Option<u32>,
        /// Use only the first N annotations.
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Localize the part in one volume or a directory of volumes.
    Parse {
        #[arg(long)]
        aog: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and score against ground-truth boxes.
    Eval {
        #[arg(long)]
        aog: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a PGM heat map of the units chosen on one layer.
    Heatmap {
        #[arg(long)]
        aog: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check .fvol files, a directory of them, or an AOG document.
    Validate { path: PathBuf },
}

fn parse_nk(s: &str) -> Result<NkMode, String> {
    if s == "auto" {
        return Ok(NkMode::Auto);
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad n_k {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(NkMode::Fixed)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Lookup(_) => EXIT_MISSING,
        Error::Argument(_)
        | Error::Format { .. }
        | Error::Truncated { .. }
        | Error::Document(_)
        | Error::Json(_)
        | Error::Io { .. } => EXIT_USAGE,
        Error::Index { .. }
        | Error::Parse(_)
        | Error::Contract(_)
        | Error::Generation(_)
        | Error::Fit(_)
        | Error::TooLarge { .. } => EXIT_CONTRACT,
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Learn {
            features,
            annotations,
            config,
            out,
            seed,
            nk,
            epsilon,
            shots,
        } => cmd_learn(LearnArgs {
            features: &features,
            annotations: &annotations,
            config: config.as_deref(),
            out: &out,
            seed,
            nk,
            epsilon,
            shots,
        }),
        Command::Parse { aog, features, out } => cmd_parse(&aog, &features, &out),
        Command::Eval {
            aog,
            features,
            annotations,
            out,
        } => cmd_eval(&aog, &features, &annotations, &out),
        Command::Heatmap {
            aog,
            features,
            layer,
            out,
        } => cmd_heatmap(&aog, &features, layer, &out),
        Command::Validate { path } => match cmd_validate(&path) {
            Ok(0) => Ok(()),
            Ok(n) => {
                error!("{n} problems found");
                return EXIT_CONTRACT;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
