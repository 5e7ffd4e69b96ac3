use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "retsim",
    version,
    about = "Run relaxation-model scenarios and write CSV, SVG and metadata"
)]
struct Cli {
    /// Directory for output files (created if missing)
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Print nothing on success
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case1, case2, pde or sweep scenario
    Run { config: PathBuf },
    /// Run a sweep scenario, one CSV row per parameter value
    Sweep { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, sweep_only) = match &cli.command {
        Command::Run { config } => (config, false),
        Command::Sweep { config } => (config, true),
    };
    match ret_cli::execute(path, &cli.out_dir, sweep_only) {
        Ok(outcome) => {
            if !cli.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                for f in &outcome.files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("retsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
