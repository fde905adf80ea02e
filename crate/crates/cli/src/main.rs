mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use idgap::Error;

use args::{Cli, Command};

/// Exit status for each error class: 2 input/config, 3 empty or
/// below-resolution comparisons, 4 training divergence.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::EmptyComparison(_) | Error::BelowResolution(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Far(a) => commands::far(a),
        Command::Frr(a) => commands::verify(a, false),
        Command::Roc(a) => commands::verify(a, true),
        Command::Train(a) => commands::train_cmd(a),
        Command::Gen(a) => commands::gen(a),
        Command::Synth(a) => commands::synth(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("idgap: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
