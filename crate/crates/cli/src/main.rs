use std::io;
use std::process::ExitCode;

use clap::Parser;
use sdre_cli::commands::EXIT_USAGE;
use sdre_cli::config::SEED_ENV;
use sdre_cli::{dispatch, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let seed = std::env::var(SEED_ENV).ok();
    let code = dispatch(&cli, seed.as_deref(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
