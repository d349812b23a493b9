mod args;
mod commands;
mod error;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn emit(cli: &Cli, bytes: &[u8]) -> Result<(), CliError> {
    match &cli.output {
        Some(path) => std::fs::write(path, bytes).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli).and_then(|bytes| emit(&cli, &bytes)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = output::to_json_line(&e.report()).unwrap_or_else(|_| format!("{e}\n").into_bytes());
            let _ = std::io::stderr().write_all(&line);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
