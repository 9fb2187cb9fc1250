//! `tna`: ingest edge lists, generate synthetic sequences and run
//! link-prediction experiments.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod error;
mod ingest;
mod run;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "tna",
    version,
    about = "Temporal neighbourhood aggregation experiments"
)]
struct Cli {
    /// Default directory for every output file.
    #[arg(long, global = true, env = "TNA_OUT_DIR", default_value = "results")]
    out: PathBuf,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bucket a timestamped edge list into a snapshot file.
    Ingest(ingest::IngestArgs),
    /// Train and evaluate on a snapshot sequence.
    Run(run::RunArgs),
    /// Generate a synthetic snapshot sequence.
    #[command(subcommand)]
    Synth(synth::SynthCommand),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Ingest(args) => ingest::execute(args, &cli.out),
        Command::Run(args) => run::execute(args, &cli.out),
        Command::Synth(cmd) => synth::execute(cmd, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
