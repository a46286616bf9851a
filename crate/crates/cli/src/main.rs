//! `solver`: batch runs of the manifold ADMM applications.
//!
//! Exit codes: 0 success, 1 solver failure or a rising trace, 2 input error,
//! 3 infeasible parameters under `--strict`. `SOLVER_THREADS` caps the worker
//! pool used for seeds and Jacobi sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use settings::{CliError, CliResult};

fn init_pool() -> CliResult<()> {
    let Ok(v) = std::env::var("SOLVER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Input(format!("SOLVER_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Run(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    init_pool()?;
    match &cli.command {
        Command::Maxbisect(a) => commands::maxbisect(a),
        Command::Mpca(a) => commands::mpca(a),
        Command::Community(a) => commands::community(a),
        Command::Synth(a) => commands::synth(a),
        Command::Solve(a) => commands::solve_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("solver: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
