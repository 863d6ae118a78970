use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rlhf_bilevel::certify::{Faults, VerifyLevel};
use rlhf_bilevel_cli::commands::{cmd_run, cmd_sweep, cmd_verify, parse_seed_range, RunFaults};

#[derive(Parser)]
#[command(name = "rlhf-bilevel", version, about = "Penalty-based bilevel RLHF on synthetic MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Train one config; writes metrics.csv, checkpoints and the resolved config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, hide = true)]
        fail_after_row: Option<usize>,
    },
    /// Run the oracle certification suite.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        #[arg(long, hide = true)]
        flip_backward_sign: bool,
    },
    /// Train one config per seed (inclusive range a..b) into <out>/seed_<s>.
    /// RLHF_BILEVEL_THREADS caps concurrent runs.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_seed_range)]
        seeds: std::vec::Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run { config, out, fail_after_row } => cmd_run(&config, &out, RunFaults { fail_after_row }),
        Command::Verify { level, flip_backward_sign } => {
            let level = match level {
                Level::Fast => VerifyLevel::Fast,
                Level::Full => VerifyLevel::Full,
            };
            cmd_verify(level, Faults { flip_backward_sign })
        }
        Command::Sweep { config, seeds, out } => cmd_sweep(&config, &seeds, &out),
    };
    ExitCode::from(code)
}
