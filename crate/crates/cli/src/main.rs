use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polytension_cli::{run, run_convergence, ExperimentConfig, RunOptions, RunReport};

#[derive(Parser)]
#[command(name = "polytension", version, about = "Fourth-order tension and stress-energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in the config.
    Run(RunArgs),
    /// Run the config's refinement study.
    Convergence(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Base seed of randomized fields (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the map and its tension fields as binary dumps.
    #[arg(long)]
    dump_fields: bool,
}

/// Exit status when the run completed but a check failed.
const CHECKS_FAILED: u8 = 1;
/// Exit status for configuration and I/O errors.
const RUN_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, convergence) = match cli.command {
        Command::Run(a) => (a, false),
        Command::Convergence(a) => (a, true),
    };
    match execute(&args, convergence) {
        Ok(report) => {
            for line in report.summary_lines() {
                println!("{line}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECKS_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUN_ERROR)
        }
    }
}

fn execute(args: &RunArgs, convergence: bool) -> anyhow::Result<RunReport> {
    let config = ExperimentConfig::load(&args.config)?;
    let opts = RunOptions {
        out: args.out.clone(),
        threads: args.threads,
        seed: args.seed,
        dump_fields: args.dump_fields,
    };
    if convergence {
        run_convergence(&config, &opts)
    } else {
        run(&config, &opts)
    }
}
