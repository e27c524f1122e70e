//! Command-line harness: experiment configuration, trajectory CSV output,
//! controller comparison and standalone ARE solves.

pub mod commands;
pub mod config;
pub mod trajectory_csv;

use std::io::Write;

use clap::{Parser, Subcommand};

use commands::{compare_command, run_command, solve_are_command, SolveAreArgs, EXIT_USAGE};
use config::ExperimentArgs;

#[derive(Parser, Debug)]
#[command(name = "sdre", version, about = "SDRE and IRL-SDRE regulation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one controller and print its cost summary
    Run(ExperimentArgs),
    /// Simulate every controller and print a cost table
    Compare(ExperimentArgs),
    /// Solve one algebraic Riccati equation
    SolveAre(SolveAreArgs),
}

/// Executes a parsed command line; returns the exit code.
pub fn dispatch(cli: &Cli, seed_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let resolved = match &cli.command {
        Command::Run(args) | Command::Compare(args) => args.resolve(seed_env).map(Some),
        Command::SolveAre(_) => Ok(None),
    };
    let cfg = match resolved {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    match (&cli.command, cfg) {
        (Command::Run(_), Some(cfg)) => run_command(&cfg, out, err),
        (Command::Compare(_), Some(cfg)) => compare_command(&cfg, out, err),
        (Command::SolveAre(args), _) => match args.resolve(seed_env) {
            Ok(problem) => solve_are_command(&problem, out, err),
            Err(e) => {
                let _ = writeln!(err, "{e}");
                EXIT_USAGE
            }
        },
        _ => unreachable!("experiment commands always resolve a config"),
    }
}
