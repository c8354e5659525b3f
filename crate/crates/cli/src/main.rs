use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mimoflow_cli::{run, CommandKind, Invocation};

/// Power control experiments: solve one allocation, simulate flow-level
/// dynamics, sweep a stability boundary, or verify against oracles.
#[derive(Parser, Debug)]
#[command(name = "mimoflow", version, about)]
struct Args {
    /// Configuration: a JSON file path or a builtin name (paper-sec5).
    #[arg(long)]
    config: String,
    /// Override the command stored in the configuration.
    #[arg(long, value_enum)]
    command: Option<CommandKind>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Write artifacts here instead of the configured directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        config: args.config,
        command: args.command,
        seed: args.seed,
        out: args.out,
    };
    match run(&inv) {
        Ok(output) => {
            println!("wrote {} artifacts to {}", output.artifacts.len(), output.out_dir.display());
            for a in &output.artifacts {
                println!("  {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
