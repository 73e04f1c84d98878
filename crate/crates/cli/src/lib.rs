//! The `bconcord` command-line tool.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use std::io::Write;

use args::{Cli, Command};
use clap::Parser;
use error::CliError;

fn dispatch(cli: &Cli) -> Result<Vec<u8>, CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Refit(a) => commands::refit(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
    }
}

/// Parses `argv`, runs the subcommand on a pool of `--threads` workers and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(bytes) => {
            if !bytes.is_empty() {
                let mut out = std::io::stdout().lock();
                if out.write_all(&bytes).and_then(|_| out.flush()).is_err() {
                    return 1;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
