use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use delaysync::harness::{self, SweepAxis};
use delaysync::protocol::{self, FrequencyGrid};
use delaysync::Result;

#[derive(Parser)]
#[command(name = "delaysync", version, about = "Scale-free synchronization under unknown input delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the protocol for a scenario's model and delay bound.
    Design { scenario: PathBuf },
    /// Sweep the frequency-domain delay condition for the designed protocol.
    Verify {
        scenario: PathBuf,
        /// Sweep up to this delay instead of the scenario's bound.
        #[arg(long)]
        tau_bar: Option<f64>,
        #[arg(long, default_value_t = FrequencyGrid::default().omega_points)]
        omega_points: usize,
        #[arg(long, default_value_t = FrequencyGrid::default().tau_points)]
        tau_points: usize,
        /// Report the raw grid minimum only.
        #[arg(long)]
        no_refine: bool,
    },
    /// Simulate a scenario and print its summary.
    Simulate {
        scenario: PathBuf,
        /// Write the trajectory as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario repeatedly with one parameter varied.
    Sweep {
        template: PathBuf,
        /// n, delays, epsilon or rho.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

#[derive(Serialize)]
struct DesignReport<'a> {
    omega_max: f64,
    params: &'a protocol::ProtocolParams,
    selection: &'a protocol::EpsilonSelection,
    margin: &'a protocol::MarginReport,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design { scenario } => {
            let s = harness::load_scenario(&scenario)?;
            let d = harness::design_for(&s)?;
            let margin = protocol::verify_frequency_condition(
                &s.model,
                &d.params.p,
                d.params.rho,
                d.params.tau_bar,
                &FrequencyGrid::default(),
            )?;
            print_json(&DesignReport {
                omega_max: d.omega_max,
                params: &d.params,
                selection: &d.selection,
                margin: &margin,
            });
        }
        Command::Verify {
            scenario,
            tau_bar,
            omega_points,
            tau_points,
            no_refine,
        } => {
            let s = harness::load_scenario(&scenario)?;
            let d = harness::design_for(&s)?;
            let grid = FrequencyGrid {
                omega_points,
                tau_points,
                refine: !no_refine,
                ..FrequencyGrid::default()
            };
            let report = protocol::verify_frequency_condition(
                &s.model,
                &d.params.p,
                d.params.rho,
                tau_bar.unwrap_or(d.params.tau_bar),
                &grid,
            )?;
            print_json(&report);
        }
        Command::Simulate { scenario, out } => {
            let s = harness::load_scenario(&scenario)?;
            let r = harness::run_scenario(&s)?;
            if let Some(path) = out {
                harness::export_csv(&r, path)?;
            }
            print_json(&r.summary());
        }
        Command::Sweep {
            template,
            axis,
            values,
        } => {
            let s = harness::load_scenario(&template)?;
            print_json(&harness::sweep(&s, axis, &values));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
