use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hkdelay::io::{cmd_plot, cmd_run, cmd_sweep, cmd_verify, CommandOutcome, ExitStatus, SweepParam};

/// Simulate delayed Hegselmann-Krause opinion models and check the
/// consensus estimates against the simulated runs.
///
/// Exit codes: 0 ok, 2 input error, 3 numeric failure, 4 verification failure.
/// HKDELAY_TOL overrides the default tolerance max(10 h^2, 1e-9).
#[derive(Debug, Parser)]
#[command(name = "hkdelay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario and write the trajectory CSV.
    Run {
        scenario: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Integrate a scenario and run every applicable check.
    Verify {
        scenario: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Re-run `verify` for each value of one parameter.
    Sweep {
        scenario: PathBuf,
        /// tau, N or M
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 1,2,5
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Draw a trajectory CSV as an SVG line chart.
    Plot {
        trajectory: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

fn parse_values(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad value \"{s}\" in --values")))
        .collect()
}

fn sweep(scenario: PathBuf, param: &str, values: &str, out: PathBuf) -> CommandOutcome {
    let param: SweepParam = match param.parse() {
        Ok(p) => p,
        Err(message) => return CommandOutcome { status: ExitStatus::InputError, message },
    };
    match parse_values(values) {
        Ok(values) => cmd_sweep(&scenario, param, &values, &out).0,
        Err(message) => CommandOutcome { status: ExitStatus::InputError, message },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out),
        Command::Verify { scenario, out } => cmd_verify(&scenario, &out),
        Command::Sweep { scenario, param, values, out } => sweep(scenario, &param, &values, out),
        Command::Plot { trajectory, out } => cmd_plot(&trajectory, &out),
    };
    if outcome.status == ExitStatus::Ok {
        println!("{}", outcome.message);
    } else {
        eprintln!("hkdelay: {}", outcome.message);
    }
    ExitCode::from(outcome.status.code() as u8)
}
