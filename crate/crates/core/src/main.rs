use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use codedfog::harness::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &output.body).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(output.body.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for (path, text) in &output.files {
        if let Err(e) = fs::write(path, text) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    eprintln!("{}", output.summary);
    if output.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
