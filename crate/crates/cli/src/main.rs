//! `eit`: mesh generation, shape corpora, denoiser training, simulation,
//! reconstruction, scoring and rendering from one command line.

mod commands;
mod error;
mod output;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use runconfig::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "eit", version, about = "Electrical impedance tomography with a diffusion prior")]
struct Cli {
    /// Key-value run configuration (`section.key = value` lines); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads for internal parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a concentric-ring disk mesh.
    Mesh(commands::mesh::MeshArgs),
    /// Generate a shape-image corpus with a checksum manifest.
    Dataset(commands::dataset::DatasetArgs),
    /// Train the denoiser on a corpus, with checkpointing and resume.
    Train(commands::train::TrainArgs),
    /// Simulate a measurement frame for a phantom on a forward mesh.
    Simulate(commands::simulate::SimulateArgs),
    /// Reconstruct conductivity from a frame.
    Reconstruct(commands::reconstruct::ReconstructArgs),
    /// Score reconstructions against a ground-truth image as CSV.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Render a conductivity image or nodal field to an 8-bit PGM.
    Render(commands::render::RenderArgs),
}

/// Output location shared by commands that write run directories.
#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    /// Output path; defaults to a fresh run directory under the output root.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,

    /// Root for run directories (overrides `EIT_OUTPUT_ROOT`, default `runs`).
    #[arg(long)]
    pub out_root: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Mesh(a) => commands::mesh::run(a, &config),
        Command::Dataset(a) => commands::dataset::run(a, &config),
        Command::Train(a) => commands::train::run(a, &config),
        Command::Simulate(a) => commands::simulate::run(a, &config),
        Command::Reconstruct(a) => commands::reconstruct::run(a, &config),
        Command::Evaluate(a) => commands::evaluate::run(a, &config),
        Command::Render(a) => commands::render::run(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
