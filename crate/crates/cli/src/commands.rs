//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::Serialize;

use micromotion_core::error::{Error, Result};
use micromotion_core::fit::{
    fit_scan, fit_sinusoid, visibility_zero_crossing, voltage_to_field, ModelKind, ModelSpec,
    VisibilityPoint,
};
use micromotion_core::io;
use micromotion_core::monitor::{drift_rate, run_monitor, SimulatedSource};
use micromotion_core::physics::{beta_per_field, ModulationDepth};
use micromotion_core::presets::{self, Apparatus};
use micromotion_core::sim::{
    simulate_correlation_histogram, simulate_scan, CorrelationConfig, CorrelationHistogram,
    Detection, ScanMode,
};

use crate::config::RunConfig;
use crate::CliArgs;

fn ensure_output_dir(cli: &CliArgs) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.output_dir)?;
    Ok(cli.output_dir.clone())
}

fn preset_of(cli: &CliArgs) -> Result<Option<Apparatus>> {
    match &cli.preset {
        Some(name) => Ok(Some(presets::preset(name)?)),
        None => Ok(None),
    }
}

#[derive(Serialize)]
struct ScanDocument<'a> {
    config: &'a RunConfig,
    records: &'a [micromotion_core::sim::ScanRecord],
}

pub fn simulate(cli: &CliArgs, config_path: &Path) -> Result<u8> {
    let config = RunConfig::load(config_path)?;
    let resolved = config.resolve(cli.seed)?;
    let records = simulate_scan(&resolved.plan, &resolved.setup, resolved.seed)?;

    let out = ensure_output_dir(cli)?;
    io::save_scan_csv(&out.join("scan.csv"), &records)?;
    io::write_json(&out.join("config_echo.json"), &resolved.config)?;
    // Same records with the generating configuration embedded, for
    // round-trip audits.
    io::write_json(
        &out.join("scan.json"),
        &ScanDocument {
            config: &resolved.config,
            records: &records,
        },
    )?;
    println!(
        "simulated {} points x {} shots (seed {}) -> {}",
        records.len(),
        resolved.plan.shots_per_point,
        resolved.seed,
        out.join("scan.csv").display()
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn fit(
    cli: &CliArgs,
    input: &Path,
    order: u32,
    mode: Option<&str>,
    pulse_time: f64,
    lamb_dicke: Option<f64>,
    float_tp: bool,
    field_gain: Option<f64>,
) -> Result<u8> {
    let records = io::load_scan_csv(input)?;
    let data_mode = match records[0].detection {
        Detection::Raman { .. } => ScanMode::Raman,
        Detection::Fluorescence { .. } => ScanMode::Fluorescence,
    };
    if let Some(requested) = mode {
        let requested_mode = match requested {
            "raman" => ScanMode::Raman,
            "fluorescence" => ScanMode::Fluorescence,
            other => return Err(Error::Config(format!("unknown mode '{other}'"))),
        };
        if requested_mode != data_mode {
            return Err(Error::Data(format!(
                "--mode {requested} but the CSV carries {} records",
                match data_mode {
                    ScanMode::Raman => "raman (successes)",
                    ScanMode::Fluorescence => "fluorescence (counts)",
                }
            )));
        }
    }

    let preset = preset_of(cli)?;
    let eta = lamb_dicke
        .or_else(|| preset.as_ref().map(|app| app.thermal.lamb_dicke))
        .unwrap_or(0.0);
    let mut spec = match data_mode {
        ScanMode::Raman => ModelSpec::raman(order, pulse_time, eta),
        ScanMode::Fluorescence => ModelSpec::fluorescence(order),
    };
    spec.float_pulse_time = float_tp && data_mode == ScanMode::Raman;

    let fit = fit_scan(&records, &spec, None)?;

    let trap = match (&preset, field_gain) {
        (_, Some(gain)) => {
            let mut trap = preset
                .as_ref()
                .map(|app| app.trap)
                .unwrap_or_else(|| presets::surface_trap().trap);
            trap.field_gain = gain;
            Some(trap)
        }
        (Some(app), None) => Some(app.trap),
        (None, None) => None,
    };

    let report = io::build_fit_report(&records, &spec, &fit, trap.as_ref())?;
    let out = ensure_output_dir(cli)?;
    io::write_json(&out.join("fit_report.json"), &report)?;

    let c = fit.compensation_voltage();
    let ci = fit.compensation_ci95();
    match &report.field_equivalent {
        Some(field) => println!(
            "c = {c:.6} V ± {ci:.6} V ({:.3} V/m ± {:.3} V/m)",
            field.field_v_per_m, field.ci95_v_per_m
        ),
        None => println!("c = {c:.6} V ± {ci:.6} V"),
    }
    if !fit.converged {
        eprintln!("warning: fit did not converge; report written anyway");
        return Ok(3);
    }
    Ok(0)
}

pub fn convert(
    cli: &CliArgs,
    voltage: Option<f64>,
    field: Option<f64>,
    beta: Option<f64>,
) -> Result<u8> {
    let app = preset_of(cli)?.ok_or_else(|| {
        Error::Config("convert needs --preset to know the trap's conversion factors".into())
    })?;
    let given = [voltage.is_some(), field.is_some(), beta.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if given != 1 {
        return Err(Error::Config(
            "give exactly one of --voltage, --field, --beta".into(),
        ));
    }
    let gain = app.trap.field_gain;
    let per_field = beta_per_field(&app.trap, &app.ion, &app.laser);
    let (v, e, b) = if let Some(v) = voltage {
        let e = voltage_to_field(v, &app.trap)?;
        (v, e, e * per_field)
    } else if let Some(e) = field {
        (e / gain, e, e * per_field)
    } else {
        let b = beta.unwrap();
        let e = b / per_field;
        (e / gain, e, b)
    };
    println!("preset = {}", app.name);
    println!("voltage_V = {v}");
    println!("field_V_per_m = {e}");
    println!("beta = {b}");
    Ok(0)
}

pub struct CorrelateArgs {
    pub input: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub simulate: bool,
    pub simulate_series: bool,
    pub bins: usize,
    pub rate: f64,
    pub duration: f64,
    pub doppler_gain: f64,
    pub beta: Option<f64>,
    pub null_voltage: f64,
    pub electrode_gain: f64,
    pub voltage_start: Option<f64>,
    pub voltage_stop: Option<f64>,
    pub voltage_points: usize,
}

#[derive(Serialize)]
struct SinusoidReport {
    offset: f64,
    amplitude: f64,
    phase_rad: f64,
    visibility: f64,
    visibility_err: f64,
    signed_visibility: f64,
    residual_norm: f64,
    total_counts: u64,
}

#[derive(Serialize)]
struct SeriesPointReport {
    voltage_v: f64,
    visibility: f64,
    visibility_err: f64,
    signed_visibility: f64,
    phase_rad: f64,
}

#[derive(Serialize)]
struct SeriesReport {
    points: Vec<SeriesPointReport>,
    zero_crossing_v: f64,
    zero_crossing_ci95_v: f64,
    extrapolated: bool,
}

fn sinusoid_report(hist: &CorrelationHistogram) -> Result<SinusoidReport> {
    let fit = fit_sinusoid(hist)?;
    Ok(SinusoidReport {
        offset: fit.offset,
        amplitude: fit.amplitude,
        phase_rad: fit.phase,
        visibility: fit.visibility,
        visibility_err: fit.visibility_err,
        signed_visibility: fit.signed_visibility(),
        residual_norm: fit.residual_norm,
        total_counts: hist.total_counts(),
    })
}

pub fn correlate(cli: &CliArgs, args: CorrelateArgs) -> Result<u8> {
    let modes = [
        args.input.is_some(),
        args.series.is_some(),
        args.simulate,
        args.simulate_series,
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if modes != 1 {
        return Err(Error::Config(
            "give exactly one of --input, --series, --simulate, --simulate-series".into(),
        ));
    }
    let out = ensure_output_dir(cli)?;
    let seed = cli.seed.unwrap_or(0);

    if let Some(path) = &args.input {
        let file = std::fs::File::open(path)?;
        let hist = io::read_histogram_csv(std::io::BufReader::new(file))?;
        let report = sinusoid_report(&hist)?;
        io::write_json(&out.join("correlation_fit.json"), &report)?;
        println!(
            "visibility = {:.4} ± {:.4} (phase {:.3} rad, {} counts)",
            report.visibility, report.visibility_err, report.phase_rad, report.total_counts
        );
        return Ok(0);
    }

    if args.simulate {
        let beta = args.beta.ok_or_else(|| {
            Error::Config("--simulate needs --beta".into())
        })?;
        let config = CorrelationConfig {
            phase_bins: args.bins,
            mean_rate: args.rate,
            duration: args.duration,
            doppler_gain: args.doppler_gain,
        };
        let hist = simulate_correlation_histogram(&config, ModulationDepth(beta), seed)?;
        let file = std::fs::File::create(out.join("histogram.csv"))?;
        io::write_histogram_csv(std::io::BufWriter::new(file), &hist)?;
        let report = sinusoid_report(&hist)?;
        io::write_json(&out.join("correlation_fit.json"), &report)?;
        println!(
            "visibility = {:.4} ± {:.4} (phase {:.3} rad, {} counts)",
            report.visibility, report.visibility_err, report.phase_rad, report.total_counts
        );
        return Ok(0);
    }

    // Series modes: fit each histogram, then the zero crossing.
    let series: Vec<(f64, CorrelationHistogram)> = if let Some(path) = &args.series {
        let file = std::fs::File::open(path)?;
        io::read_histogram_series_csv(std::io::BufReader::new(file))?
    } else {
        let app = preset_of(cli)?.ok_or_else(|| {
            Error::Config("--simulate-series needs --preset for the modulation scale".into())
        })?;
        let (start, stop) = match (args.voltage_start, args.voltage_stop) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Config(
                    "--simulate-series needs --voltage-start and --voltage-stop".into(),
                ))
            }
        };
        if args.voltage_points < 3 {
            return Err(Error::Config("--voltage-points must be >= 3".into()));
        }
        let per_field = beta_per_field(&app.trap, &app.ion, &app.laser);
        let config = CorrelationConfig {
            phase_bins: args.bins,
            mean_rate: args.rate,
            duration: args.duration,
            doppler_gain: args.doppler_gain,
        };
        let step = (stop - start) / (args.voltage_points - 1) as f64;
        let mut series = Vec::with_capacity(args.voltage_points);
        for i in 0..args.voltage_points {
            let v = start + step * i as f64;
            let beta = per_field * args.electrode_gain * (v - args.null_voltage);
            let hist =
                simulate_correlation_histogram(&config, ModulationDepth(beta), seed + i as u64)?;
            series.push((v, hist));
        }
        let file = std::fs::File::create(out.join("correlation_series.csv"))?;
        io::write_histogram_series_csv(std::io::BufWriter::new(file), &series)?;
        series
    };

    let mut points = Vec::with_capacity(series.len());
    let mut reports = Vec::with_capacity(series.len());
    for (voltage, hist) in &series {
        let fit = fit_sinusoid(hist)?;
        points.push(VisibilityPoint {
            voltage: *voltage,
            signed_visibility: fit.signed_visibility(),
            std_error: fit.visibility_err,
        });
        reports.push(SeriesPointReport {
            voltage_v: *voltage,
            visibility: fit.visibility,
            visibility_err: fit.visibility_err,
            signed_visibility: fit.signed_visibility(),
            phase_rad: fit.phase,
        });
    }
    let crossing = visibility_zero_crossing(&points)?;
    let report = SeriesReport {
        points: reports,
        zero_crossing_v: crossing.voltage,
        zero_crossing_ci95_v: crossing.ci95,
        extrapolated: crossing.extrapolated,
    };
    io::write_json(&out.join("visibility_series.json"), &report)?;
    println!(
        "zero crossing = {:.4} V ± {:.4} V{}",
        crossing.voltage,
        crossing.ci95,
        if crossing.extrapolated {
            " (extrapolated: no sign change in the series)"
        } else {
            ""
        }
    );
    Ok(0)
}

pub fn monitor(cli: &CliArgs, config_path: &Path) -> Result<u8> {
    let config = RunConfig::load(config_path)?;
    let resolved = config.resolve(cli.seed)?;
    let section = resolved
        .config
        .monitor
        .clone()
        .ok_or_else(|| Error::Config("monitor command needs a `monitor` config section".into()))?;
    if section.repeat < 1 {
        return Err(Error::Config("monitor.repeat must be >= 1".into()));
    }

    let spec = match resolved.plan.mode {
        ScanMode::Raman => ModelSpec::raman(
            resolved.plan.order,
            resolved.plan.pulse_time,
            resolved.setup.thermal.lamb_dicke,
        ),
        ScanMode::Fluorescence => ModelSpec::fluorescence(resolved.plan.order),
    };
    debug_assert!(matches!(
        spec.kind,
        ModelKind::RamanScan | ModelKind::FluorescenceScan
    ));
    let mut source = SimulatedSource::new(
        resolved.plan.clone(),
        resolved.setup.clone(),
        section.cadence_s,
        resolved.seed,
    )?;
    let output = run_monitor(&mut source, &spec, section.repeat)?;

    let out = ensure_output_dir(cli)?;
    let file = std::fs::File::create(out.join("drift_series.csv"))?;
    io::write_drift_series_csv(std::io::BufWriter::new(file), &output.series)?;
    let file = std::fs::File::create(out.join("waterfall.csv"))?;
    io::write_waterfall_csv(std::io::BufWriter::new(file), &output.waterfall)?;
    let file = std::fs::File::create(out.join("waterfall_meta.json"))?;
    io::write_waterfall_sidecar(std::io::BufWriter::new(file), &output.waterfall)?;
    io::write_json(&out.join("config_echo.json"), &resolved.config)?;

    if output.truncated() {
        eprintln!(
            "warning: source delivered {}/{} scans",
            output.completed, output.requested
        );
    }
    println!(
        "monitored {} scans at {:.2} scans/min",
        output.completed, output.series.scan_rate
    );
    match drift_rate(&output.series) {
        Ok(rate) => {
            let entries = &output.series.entries;
            let span = entries.last().map(|e| e.timestamp).unwrap_or(0.0)
                - entries.first().map(|e| e.timestamp).unwrap_or(0.0);
            let total_v = rate.slope * span;
            let gain = resolved.setup.trap.field_gain;
            println!(
                "drift rate = {:.3e} V/s ± {:.1e} V/s (total {:.4} V ≈ {:.1} V/m over {:.0} s)",
                rate.slope,
                rate.ci95,
                total_v,
                total_v * gain,
                span
            );
        }
        Err(err) => println!("drift rate unavailable: {err}"),
    }
    if let Some(threshold) = output.series.alert_threshold() {
        println!("alert threshold (3x median ci95) = {threshold:.4} V");
    }
    Ok(0)
}
