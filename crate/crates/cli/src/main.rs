//! `micromotion` — simulate, fit, convert, correlate, and monitor
//! dc-voltage micromotion-compensation scans.
//!
//! Exit codes: 0 success, 2 input/config error, 3 fit non-convergence or
//! unidentifiable fit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use micromotion_core::error::Error;

#[derive(Parser)]
#[command(
    name = "micromotion",
    version,
    about = "Micromotion-compensation measurement toolkit",
    propagate_version = true
)]
struct Cli {
    /// Override the random seed of the run configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Named apparatus preset ("surface-trap" or "blade-trap").
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic voltage scan from a JSON run configuration.
    Simulate {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a scan CSV and report the compensation voltage.
    Fit {
        /// Scan data CSV (timestamp_s,voltage_V,shots,successes|counts).
        #[arg(long)]
        input: PathBuf,
        /// rf sideband order probed by the scan.
        #[arg(long, default_value_t = 0)]
        order: u32,
        /// Detection mode; defaults to what the CSV header says.
        #[arg(long, value_parser = ["raman", "fluorescence"])]
        mode: Option<String>,
        /// Commanded pulse time in seconds (Raman scans).
        #[arg(long, default_value_t = 1e-5)]
        pulse_time: f64,
        /// Lamb–Dicke parameter; defaults to the preset's value or 0.
        #[arg(long)]
        lamb_dicke: Option<f64>,
        /// Float the pulse time instead of the transition strength.
        #[arg(long)]
        float_tp: bool,
        /// Field gain in (V/m)/V when no preset is given.
        #[arg(long)]
        field_gain: Option<f64>,
    },
    /// Convert between control voltage, field, and modulation depth.
    Convert {
        #[arg(long, conflicts_with_all = ["field", "beta"], allow_negative_numbers = true)]
        voltage: Option<f64>,
        #[arg(long, conflicts_with = "beta", allow_negative_numbers = true)]
        field: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
    },
    /// Fit rf-phase correlation histograms; optionally a voltage series
    /// with a zero-crossing fit.
    Correlate {
        /// Histogram CSV (phase_rad,counts).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Voltage-tagged histogram series CSV (voltage_V,phase_rad,counts).
        #[arg(long)]
        series: Option<PathBuf>,
        /// Simulate a single histogram instead of reading one.
        #[arg(long)]
        simulate: bool,
        /// Simulate a histogram series over a voltage range.
        #[arg(long)]
        simulate_series: bool,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// Mean count rate in counts/s.
        #[arg(long, default_value_t = 2e4)]
        rate: f64,
        /// Accumulation time per histogram in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Visibility per unit modulation depth.
        #[arg(long, default_value_t = 0.2)]
        doppler_gain: f64,
        /// Modulation depth for --simulate.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        /// Null position for --simulate-series.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        null_voltage: f64,
        /// Gain of the tuning electrode in (V/m)/V for --simulate-series.
        #[arg(long, default_value_t = 150.0)]
        electrode_gain: f64,
        #[arg(long, allow_negative_numbers = true)]
        voltage_start: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        voltage_stop: Option<f64>,
        #[arg(long, default_value_t = 7)]
        voltage_points: usize,
    },
    /// Run repeated scans and export the drift series and waterfall.
    Monitor {
        /// Run configuration (JSON) with a `monitor` section.
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Data(_)
        | Error::Domain(_)
        | Error::InsufficientData(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::DegenerateFit(_) | Error::Numeric(_) | Error::Initialization(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config } => commands::simulate(&cli, config),
        Command::Fit {
            input,
            order,
            mode,
            pulse_time,
            lamb_dicke,
            float_tp,
            field_gain,
        } => commands::fit(
            &cli,
            input,
            *order,
            mode.as_deref(),
            *pulse_time,
            *lamb_dicke,
            *float_tp,
            *field_gain,
        ),
        Command::Convert {
            voltage,
            field,
            beta,
        } => commands::convert(&cli, *voltage, *field, *beta),
        Command::Correlate {
            input,
            series,
            simulate,
            simulate_series,
            bins,
            rate,
            duration,
            doppler_gain,
            beta,
            null_voltage,
            electrode_gain,
            voltage_start,
            voltage_stop,
            voltage_points,
        } => commands::correlate(
            &cli,
            commands::CorrelateArgs {
                input: input.clone(),
                series: series.clone(),
                simulate: *simulate,
                simulate_series: *simulate_series,
                bins: *bins,
                rate: *rate,
                duration: *duration,
                doppler_gain: *doppler_gain,
                beta: *beta,
                null_voltage: *null_voltage,
                electrode_gain: *electrode_gain,
                voltage_start: *voltage_start,
                voltage_stop: *voltage_stop,
                voltage_points: *voltage_points,
            },
        ),
        Command::Monitor { config } => commands::monitor(&cli, config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

pub(crate) use Cli as CliArgs;
