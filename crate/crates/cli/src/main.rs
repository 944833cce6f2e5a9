//! `alt4blind`: filter a raw corpus, embed it into an index, evaluate, serve.
//!
//! Exit statuses: 0 success, 2 parse or usage error, 3 encoder failure,
//! 4 I/O failure, 5 evaluation input error.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;
use tracing::Level;

use args::{Cli, Command, FileConfig, Overlay, DEFAULT_SEED};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Filter(a) => commands::filter(a.overlay(file.filter), seed),
        Command::Build(a) => commands::build(a.overlay(file.build), seed, cli.quiet),
        Command::Eval(a) => commands::eval(a.overlay(file.eval), seed),
        Command::Serve(a) => commands::serve(a.overlay(file.serve), seed),
        Command::Synth(a) => commands::synth(a.overlay(file.synth), seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.quiet { Level::WARN } else { Level::INFO })
        .with_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
