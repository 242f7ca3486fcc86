//! `labgatr`: tokenise meshes, train and evaluate models, and run the
//! numerical self-checks.

mod commands;
mod config;
mod dataset;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labgatr_core::mesh::MeshError;
use labgatr_core::model::{ModelError, ToyKind};
use labgatr_core::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Mesh(String, MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Autodiff(#[from] labgatr_core::autodiff::AutodiffError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "labgatr", version, about = "Geometric algebra transformer for large meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural toy dataset as mesh files.
    Generate {
        #[arg(long, value_parser = parse_kind)]
        kind: ToyKind,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the pooling and interpolation plan of one mesh.
    Tokenize {
        /// Mesh file (`.off` or `.vtk`).
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        ratio: f64,
        #[arg(long, default_value_t = 3, value_parser = parse_k)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a run configuration.
    Train(TrainArgs),
    /// Score a checkpoint on a split of the configured dataset.
    Eval(EvalArgs),
    /// Numerical verification suites.
    Verify {
        #[command(subcommand)]
        suite: VerifySuite,
    },
    /// Algebra, embedding and convex-combination suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_parser = parse_k)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Single-threaded, bit-reproducible run; wall-clock times go to
    /// `timings.csv` instead of the log.
    #[arg(long)]
    pub serial: bool,
    /// Output directory (defaults to the configured one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to `best.ckpt` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "val")]
    pub split: Split,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_parser = parse_k)]
    pub k: Option<usize>,
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Val,
    All,
}

#[derive(Debug, Subcommand)]
enum VerifySuite {
    /// Random rigid motions including reflections against every layer and a full model.
    Equivariance {
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 16)]
        tokens: usize,
        #[arg(long, default_value_t = 20)]
        motions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference checks of every parameterised layer and the L1 objective.
    Grad {
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tokenisation oracles on random point clouds.
    Tokens {
        #[arg(long, default_value_t = 50)]
        clouds: usize,
        #[arg(long, default_value_t = 5000)]
        max_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k @ 3..=4) => Ok(k),
        _ => Err(format!("k must be 3 or 4, got `{s}`")),
    }
}

fn parse_kind(s: &str) -> Result<ToyKind, String> {
    s.parse()
}

/// `LABGATR_THREADS` caps the worker pool.
fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LABGATR_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("LABGATR_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate { kind, count, seed, out } => commands::generate(kind, count, seed, &out).map(|_| true),
        Command::Tokenize { mesh, ratio, k, seed, out } => {
            commands::tokenize(&mesh, ratio, k, seed, &out).map(|_| true)
        }
        Command::Train(args) => commands::train(&args).map(|_| true),
        Command::Eval(args) => commands::eval(&args).map(|_| true),
        Command::Verify { suite } => match suite {
            VerifySuite::Equivariance { blocks, tokens, motions, seed } => {
                commands::verify_equivariance(blocks, tokens, motions, seed)
            }
            VerifySuite::Grad { points, seed } => commands::verify_grad(points, seed),
            VerifySuite::Tokens { clouds, max_points, seed } => commands::verify_tokens(clouds, max_points, seed),
        },
        Command::Selftest { seed } => Ok(commands::selftest(seed)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("labgatr: some checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("labgatr: {e}");
            ExitCode::from(2)
        }
    }
}
