//! `cocycle-lab` command-line front end.
//!
//! Exit status: 0 on success, 1 on domain errors (the numerics refused), 2 on
//! usage errors (bad flags, unreadable or malformed descriptors).

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum AppError {
    Usage(cocycle_lab::Error),
    Message(String),
    Domain(cocycle_lab::Error),
    Io(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) | AppError::Message(_) => 2,
            AppError::Domain(_) | AppError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(e) | AppError::Domain(e) => write!(f, "{e}"),
            AppError::Message(m) | AppError::Io(m) => f.write_str(m),
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Bands(a) => commands::bands(a),
        Command::Ids(a) => commands::ids(a),
        Command::Lyapunov(a) => commands::lyapunov(a),
        Command::Density(a) => commands::density(a),
        Command::Growth(a) => commands::growth(a),
        Command::Deform(c) => commands::deform(c),
        Command::Tower(c) => commands::tower(c),
        Command::Verify(c) => commands::verify(c),
        Command::Sweep(a) => commands::sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let msg = e.to_string();
                let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
                eprintln!("{first}");
            }
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
