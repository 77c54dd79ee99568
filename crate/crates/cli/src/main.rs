//! `fedxfer` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
//! Logs go to stderr (`FEDXFER_LOG` sets the filter); files are written only
//! under `--out`.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::config::UsageError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDXFER_LOG", "info"))
        .target(env_logger::Target::Stderr)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
