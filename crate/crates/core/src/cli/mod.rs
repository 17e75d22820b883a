//! Command line front end: `bounds`, `check`, `simulate`, `steady`,
//! `lyapunov` and `scan`, each driven by an INI config.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    apply_axis, cmd_bounds, cmd_check, cmd_lyapunov, cmd_scan, cmd_simulate, cmd_steady, evaluate_conditions,
    scan_conditions, solve_steady, Conditions, ScanAxis, BOX_SLACK, SCAN_HEADER,
};
pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_B_CONDITION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INVALID_CONFIG: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hollingtanner", version, about = "Diffusive Holling-Tanner predator-prey laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// INI run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `[output] directory`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound quadruple by root finding and monotone iteration.
    Bounds(Common),
    /// Verdicts and margins of the hypotheses, as JSON.
    Check(Common),
    /// Integrate the system and write the trace.
    Simulate(Common),
    /// Solve for a steady state and test containment.
    Steady(Common),
    /// Monitor the Lyapunov functional along a run.
    Lyapunov(Common),
    /// Tabulate verdicts along one parameter axis.
    Scan {
        #[command(flatten)]
        common: Common,
        /// b, r, amplitude or contrast.
        #[arg(long)]
        axis: String,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BConditionViolated { .. } => EXIT_B_CONDITION,
        Error::NotConverged { .. }
        | Error::IterationNotConverged { .. }
        | Error::RelaxationNotConverged { .. }
        | Error::NewtonFailed(_)
        | Error::PositivityLost { .. }
        | Error::MonotonicityViolated { .. }
        | Error::NoSignChange { .. } => EXIT_NOT_CONVERGED,
        Error::Config(_)
        | Error::Io(_)
        | Error::InvalidGrid(_)
        | Error::InvalidParameter(_)
        | Error::GridMismatch(_)
        | Error::NonPositive { .. }
        | Error::NonFinite(_)
        | Error::Cfl { .. } => EXIT_INVALID_CONFIG,
        Error::Singularity { .. } | Error::Precondition(_) => EXIT_OTHER,
    }
}

fn describe(err: &Error) -> String {
    match err {
        Error::BConditionViolated { .. } => format!(
            "condition_2_2 failed: {err}; the bound, attraction and stability results do not apply"
        ),
        _ => err.to_string(),
    }
}

/// Runs a parsed command, printing its report; returns the exit status.
pub fn run(cli: Cli) -> i32 {
    let common = match &cli.command {
        Command::Bounds(c)
        | Command::Check(c)
        | Command::Simulate(c)
        | Command::Steady(c)
        | Command::Lyapunov(c)
        | Command::Scan { common: c, .. } => c,
    };
    let result = RunConfig::load(&common.config).and_then(|cfg| {
        let out = cfg.output_dir(common.out.as_deref());
        match &cli.command {
            Command::Bounds(_) => cmd_bounds(&cfg, &out),
            Command::Check(_) => cmd_check(&cfg, &out),
            Command::Simulate(_) => cmd_simulate(&cfg, &out),
            Command::Steady(_) => cmd_steady(&cfg, &out),
            Command::Lyapunov(_) => cmd_lyapunov(&cfg, &out),
            Command::Scan { axis, values, .. } => cmd_scan(&cfg, axis.parse()?, values, &out),
        }
    });
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            exit_code(&e)
        }
    }
}

/// Parses `args` and runs; clap usage errors map to the invalid-config code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
