use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_ols_cli::{list_experiments, run_manifest, RunOptions, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "robust-ols", version, about = "Simulation experiments for OLS t-tests under correlated errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a manifest.
    Run {
        manifest: PathBuf,
        /// Worker threads (default: one per logical core).
        #[arg(long, env = WORKERS_ENV, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
        /// Output directory, overriding the manifest's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Seed, overriding the manifest's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List experiment kinds and their parameters.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Run { manifest, workers, output, seed } => {
            let options = RunOptions { workers: workers.map(|w| w as usize), output, seed };
            match run_manifest(&manifest, &options) {
                Ok(report) => {
                    for file in &report.files {
                        println!("{}", file.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
