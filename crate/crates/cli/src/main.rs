//! `bandmatch` command-line harness.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

mod args;
mod commands;
mod config;
mod index;

use std::process::ExitCode;

use bandmatch::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use config::RunConfig;

pub struct Failure {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<bandmatch::Error> for Failure {
    fn from(e: bandmatch::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| bandmatch::Error::Config(format!("--jobs: {e}")))?;
    }
    let ctx = Context {
        config: RunConfig::load(cli.config.as_deref())?,
        seed: cli.seed,
        out: cli.out,
    };
    match &cli.command {
        Command::Extract { manifest, preset } => {
            commands::warn_unused_seed(&ctx, "extract");
            commands::extract(&ctx, manifest, preset.as_deref())
        }
        Command::Stats { index, filter } => {
            commands::warn_unused_seed(&ctx, "stats");
            Ok(commands::stats(&ctx, index, filter)?)
        }
        Command::Adapt {
            index,
            stats,
            mode,
            segment_len,
            filter,
        } => Ok(commands::adapt_cmd(&ctx, index, stats, *mode, *segment_len, filter)?),
        Command::Train { index, filter } => Ok(commands::train(&ctx, index, filter)?),
        Command::Evaluate { model, index } => {
            commands::warn_unused_seed(&ctx, "evaluate");
            Ok(commands::evaluate(&ctx, model, index)?)
        }
        Command::Sweep => Ok(commands::sweep(&ctx)?),
        Command::Synth => Ok(commands::synth(&ctx)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(commands::exit_status(failure.kind))
        }
    }
}
