use std::io::{self, Write};
use std::process::ExitCode;
use std::sync::mpsc;

use clap::error::ErrorKind;
use clap::Parser;

use qoffload_cli::{execute, serve_until, Cli, CliError, Command, EXIT_INPUT};

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Serve(args) => {
            let (tx, rx) = mpsc::channel();
            ctrlc::set_handler(move || {
                let _ = tx.send(());
            })
            .map_err(|e| CliError::server(format!("cannot install signal handler: {e}")))?;
            serve_until(args, rx, &mut out)
        }
        command => execute(command, &mut out, &mut io::stderr()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INPUT),
            };
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
