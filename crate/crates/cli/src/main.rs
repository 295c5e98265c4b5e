mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use dispatch_core::dispatch::DispatchError;
use dispatch_core::evolve::EvolveError;
use dispatch_core::sim::SimError;

use args::{Cli, Command};

/// A consistency check inside the engine failed; reported with exit code 3.
#[derive(Debug, thiserror::Error)]
#[error("internal invariant violated: {0}")]
pub struct InvariantViolation(pub String);

fn is_internal(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<InvariantViolation>()
            || e.is::<SimError>()
            || matches!(e.downcast_ref::<DispatchError>(), Some(DispatchError::Sim(_)))
            || matches!(
                e.downcast_ref::<EvolveError>(),
                Some(EvolveError::Dispatch(DispatchError::Sim(_)))
            )
    })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Run(a) => commands::run(a),
        Command::Evolve(a) => commands::evolve(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_internal(&e) { 3 } else { 2 })
        }
    }
}
