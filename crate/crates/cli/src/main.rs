use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use runscan_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let outcome = run(&cli, &mut lock).and_then(|()| lock.flush().map_err(Into::into));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.code == 0 => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("runscan: {e}");
            ExitCode::from(e.code)
        }
    }
}
