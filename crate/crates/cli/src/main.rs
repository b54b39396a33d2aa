mod commands;
mod design_io;
mod error;
mod json;
mod reproduce;
mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;
use crate::scenario::Scenario;

/// Locally optimal designs for dose-finding trials with an active control.
#[derive(Parser)]
#[command(name = "acdesign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Candidate and verification grid size (overrides the scenario).
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,
    /// Equivalence-check tolerance (overrides the scenario).
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Seed for the randomised solver starts.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal design of a scenario and certify it.
    Solve { scenario: PathBuf },
    /// Check a design against the equivalence theorem.
    Verify {
        scenario: PathBuf,
        /// Design CSV; defaults to the scenario's `design` key.
        design: Option<PathBuf>,
    },
    /// Efficiencies of a design relative to the computed optima.
    Efficiency { scenario: PathBuf, design: Option<PathBuf> },
    /// Recompute the published D- and AC-optimal design tables.
    Reproduce {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

impl Cli {
    fn apply(&self, options: &mut acdesign::SolveOptions) {
        if let Some(n) = self.grid {
            options.grid_size = n;
            options.verify.grid_size = n;
        }
        if let Some(t) = self.tol {
            options.verify.tol = t;
        }
        if let Some(s) = self.seed {
            options.seed = s;
        }
    }

    fn scenario(&self, path: &Path) -> Result<Scenario, CliError> {
        let mut sc = Scenario::load(path)?;
        self.apply(&mut sc.solve);
        Ok(sc)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    match &cli.command {
        Command::Solve { scenario } => commands::cmd_solve(&cli.scenario(scenario)?, cli.json, &mut out),
        Command::Verify { scenario, design } => {
            commands::cmd_verify(&cli.scenario(scenario)?, design.as_deref(), cli.json, &mut out, &mut err)
        }
        Command::Efficiency { scenario, design } => {
            commands::cmd_efficiency(&cli.scenario(scenario)?, design.as_deref(), cli.json, &mut out)
        }
        Command::Reproduce { out: dir } => {
            let mut setup = reproduce::Setup::default();
            cli.apply(&mut setup.solve);
            reproduce::cmd_reproduce(&setup, dir.as_deref(), cli.json, &mut out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
