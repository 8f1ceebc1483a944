use std::process::ExitCode;

use amap_cli::{cmd_imagine, cmd_replay, cmd_run, ImagineArgs, ReplayArgs, RunArgs};
use clap::{Parser, Subcommand};

/// Symbolic navigation trials with an imagined spring-mass map.
#[derive(Parser, Debug)]
#[command(name = "amap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run navigation trials and write JSONL traces.
    Run(RunArgs),
    /// Imagine a layout from a clause set and draw it.
    Imagine(ImagineArgs),
    /// Draw a recorded trial.
    Replay(ReplayArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AMAP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // exit 2 is reserved for a failed trial
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Imagine(args) => cmd_imagine(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match outcome {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
