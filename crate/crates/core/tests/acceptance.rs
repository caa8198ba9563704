//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Criterion 9 (byte-level
//! determinism of the command-line workflows) lives in the CLI crate's
//! acceptance suite.

mod common;

use common::bessel_series_oracle;
use micromotion_core::fit::{
    fit_bessel_scan, fit_fluorescence_scan, fit_sinusoid, visibility_zero_crossing, ModelSpec,
    VisibilityPoint,
};
use micromotion_core::monitor::{run_monitor, SimulatedSource};
use micromotion_core::physics::{
    beta_per_field, pi_pulse_probability, FluorescenceConfig, ModulationDepth,
};
use micromotion_core::presets;
use micromotion_core::sim::{
    simulate_correlation_histogram, simulate_scan, CorrelationConfig, ScanMode, ScanPlan,
    ScanSetup, StrayFieldModel,
};
use micromotion_core::special::bessel_j;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PULSE: f64 = 1e-5;

fn report(criterion: u32, name: &str, pass: bool) {
    println!(
        "[acceptance] criterion {criterion} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed");
}

#[test]
fn criterion_1_model_identities() {
    let mut pass = pi_pulse_probability(0, ModulationDepth(0.0)).unwrap() == 1.0;
    for n in 1..=5u32 {
        pass &= pi_pulse_probability(n, ModulationDepth(0.0)).unwrap() == 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let beta: f64 = rng.random_range(-3.0..3.0);
        let n: u32 = rng.random_range(0..=5);
        let plus = pi_pulse_probability(n, ModulationDepth(beta)).unwrap();
        let minus = pi_pulse_probability(n, ModulationDepth(-beta)).unwrap();
        pass &= (plus - minus).abs() <= 1e-12;
    }
    report(1, "model identities and evenness", pass);
}

#[test]
fn criterion_2_bessel_oracle() {
    let mut pass = true;
    let points = 2000usize;
    for i in 0..points {
        let x = 20.0 * i as f64 / (points - 1) as f64;
        for n in 0..=5u32 {
            let oracle = bessel_series_oracle(n, x);
            let value = bessel_j(n, x).unwrap();
            if (value - oracle).abs() > 1e-10 {
                eprintln!("J_{n}({x}): {value} vs oracle {oracle}");
                pass = false;
            }
        }
    }
    for n in 1..=5u32 {
        for i in 0..=199 {
            let x = 0.1 + i as f64 * 0.1;
            let lhs = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
            let rhs = 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
            if (lhs - rhs).abs() > 1e-9 {
                eprintln!("recurrence n={n} x={x}: {lhs} vs {rhs}");
                pass = false;
            }
        }
    }
    report(2, "bessel series oracle and recurrence", pass);
}

#[test]
fn criterion_3_field_conversion_consistency() {
    let surface = presets::surface_trap();
    let blade = presets::blade_trap();
    let within = |value: f64, reference: f64, rel: f64| -> bool {
        (value - reference).abs() <= rel * reference.abs()
    };

    let mut pass = true;
    // Voltage-to-field conversions against the published sensitivities.
    pass &= within(0.0018 * surface.trap.field_gain, 5.1, 0.03);
    pass &= within(9.7 * blade.trap.field_gain, 2.2, 0.03);
    pass &= within(13.9 * blade.trap.field_gain, 3.1, 0.03);

    // Calibrated q: field-to-β on the carrier column within 2%, the
    // sideband column within 10% (the columns carry ~6% internal spread).
    let ratio = beta_per_field(&surface.trap, &surface.ion, &surface.laser);
    pass &= within(ratio * 5.1, 0.091, 0.02);
    pass &= within(ratio * 5.0, 0.084, 0.10);

    report(3, "reference sensitivity-table consistency", pass);
}

#[test]
fn criterion_4_fit_recovery_and_coverage() {
    let app = presets::surface_trap();
    let true_c = 0.5;
    let setup = ScanSetup::from_apparatus(
        &app,
        StrayFieldModel::constant(-app.trap.field_gain * true_c),
    );
    let plan = ScanPlan::linear(0.46, 0.54, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
    let spec = ModelSpec::raman(0, PULSE, app.thermal.lamb_dicke);

    let mut hits = 0usize;
    let mut cis = Vec::new();
    let mut errors = Vec::new();
    for seed in 0..100u64 {
        let records = simulate_scan(&plan, &setup, seed).unwrap();
        let fit = fit_bessel_scan(&records, &spec, None).unwrap();
        let c = fit.compensation_voltage();
        let ci = fit.compensation_ci95();
        if (c - true_c).abs() <= ci {
            hits += 1;
        }
        cis.push(ci);
        errors.push((c - true_c).abs());
    }
    cis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_ci = cis[cis.len() / 2];
    let median_error = errors[errors.len() / 2];

    let pass = (88..=99).contains(&hits) && median_error <= median_ci;
    println!(
        "[acceptance]   coverage {hits}/100, median |c_fit - c_true| = {median_error:.6} V, \
         median ci95 = {median_ci:.6} V"
    );
    report(4, "fit recovery and interval coverage", pass);
}

#[test]
fn criterion_5_sensitivity_scale() {
    // Carrier scans at 10-20 point statistics: the field-unit confidence
    // half-width lands within a factor of 3 of the published scale for
    // both apparatuses.
    let run = |app: &presets::Apparatus, lo: f64, hi: f64, true_c: f64, reference: f64| -> (f64, bool) {
        let setup = ScanSetup::from_apparatus(
            app,
            StrayFieldModel::constant(-app.trap.field_gain * true_c),
        );
        let plan = ScanPlan::linear(lo, hi, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
        let spec = ModelSpec::raman(0, PULSE, app.thermal.lamb_dicke);
        let mut cis: Vec<f64> = (0..9u64)
            .map(|seed| {
                let records = simulate_scan(&plan, &setup, seed).unwrap();
                let fit = fit_bessel_scan(&records, &spec, None).unwrap();
                fit.compensation_ci95() * app.trap.field_gain
            })
            .collect();
        cis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = cis[cis.len() / 2];
        (median, median >= reference / 3.0 && median <= reference * 3.0)
    };

    let surface = presets::surface_trap();
    let (surface_ci, surface_ok) = run(&surface, 0.46, 0.54, 0.5, 5.1);
    let blade = presets::blade_trap();
    let (blade_ci, blade_ok) = run(&blade, -260.0, 340.0, 40.0, 2.2);
    println!(
        "[acceptance]   surface median ci95 = {surface_ci:.2} V/m (reference 5.1), \
         blade = {blade_ci:.2} V/m (reference 2.2)"
    );
    report(5, "sensitivity scale in field units", surface_ok && blade_ok);
}

#[test]
fn criterion_6_drift_reproduction() {
    let app = presets::surface_trap();
    let repeat = 30usize;
    let cadence = 20.0; // ≈ 3 scans/minute
    let span = (repeat - 1) as f64 * cadence;
    let stray = StrayFieldModel {
        constant: -app.trap.field_gain * 0.52,
        linear_drift: 86.0 / span,
        charging_amplitude: 0.0,
        charging_timescale: 1.0,
    };
    let setup = ScanSetup::from_apparatus(&app, stray);
    let plan = ScanPlan::linear(0.42, 0.54, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
    let spec = ModelSpec::raman(0, PULSE, app.thermal.lamb_dicke);
    let mut source = SimulatedSource::new(plan, setup, cadence, 0).unwrap();
    let out = run_monitor(&mut source, &spec, repeat).unwrap();

    let first = out.series.entries.first().unwrap();
    let last = out.series.entries.last().unwrap();
    let moved = (last.compensation_voltage - first.compensation_voltage).abs();
    let rate_ok = (out.series.scan_rate - 3.0).abs() < 0.15;
    let moved_ok = (moved - 0.030).abs() <= 0.1 * 0.030;
    println!(
        "[acceptance]   endpoint difference {moved:.4} V (target 0.030 ± 10%), \
         cadence {:.2} scans/min",
        out.series.scan_rate
    );
    report(6, "86 V/m drift maps to 0.030 V", moved_ok && rate_ok);
}

#[test]
fn criterion_7_photon_correlation() {
    // (a) visibility recovery at 1e6 total counts.
    let config = CorrelationConfig {
        phase_bins: 64,
        mean_rate: 1e6,
        duration: 1.0,
        doppler_gain: 1.5,
    };
    let mut pass_vis = true;
    for seed in 0..5u64 {
        let hist = simulate_correlation_histogram(&config, ModulationDepth(0.2), seed).unwrap();
        let fit = fit_sinusoid(&hist).unwrap();
        if (fit.visibility - 0.3).abs() > 0.01 {
            eprintln!("seed {seed}: visibility {}", fit.visibility);
            pass_vis = false;
        }
    }

    // (b) zero-crossing interval at weak-modulation statistics.
    let app = presets::surface_trap();
    let bpf = beta_per_field(&app.trap, &app.ion, &app.laser);
    let electrode_gain = 150.0;
    let true_null = 0.2;
    let mut pass_zc = true;
    let mut cis = Vec::new();
    for seed in 0..6u64 {
        let mut points = Vec::new();
        for (i, v) in (-3..=3).map(|i| true_null + i as f64 * 0.15).enumerate() {
            let beta = bpf * electrode_gain * (v - true_null);
            let cfg = CorrelationConfig {
                phase_bins: 32,
                mean_rate: 2e4,
                duration: 1.0,
                doppler_gain: 0.2,
            };
            let hist =
                simulate_correlation_histogram(&cfg, ModulationDepth(beta), seed * 100 + i as u64)
                    .unwrap();
            let fit = fit_sinusoid(&hist).unwrap();
            points.push(VisibilityPoint {
                voltage: v,
                signed_visibility: fit.signed_visibility(),
                std_error: fit.visibility_err,
            });
        }
        let zc = visibility_zero_crossing(&points).unwrap();
        cis.push(zc.ci95);
        if !(0.017 / 3.0..=0.017 * 3.0).contains(&zc.ci95) {
            eprintln!("seed {seed}: zero-crossing ci95 {}", zc.ci95);
            pass_zc = false;
        }
    }
    println!(
        "[acceptance]   zero-crossing ci95 range {:.4}..{:.4} V (reference 0.017)",
        cis.iter().cloned().fold(f64::INFINITY, f64::min),
        cis.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    report(7, "photon-correlation visibility and crossing", pass_vis && pass_zc);
}

#[test]
fn criterion_8_fluorescence_mode() {
    let app = presets::surface_trap();
    let true_c = 1.39;
    let mut setup = ScanSetup::from_apparatus(
        &app,
        StrayFieldModel::constant(-app.trap.field_gain * true_c),
    );
    setup.fluorescence = Some(FluorescenceConfig {
        collection_efficiency: 0.007,
        cycling_rate: 5e4,
        detection_time: 0.02,
    });
    let slope = app.trap.field_gain * beta_per_field(&app.trap, &app.ion, &app.laser);
    let half = 4.2 / slope;

    let mut pass = true;
    for (order, reference) in [(0u32, 0.16), (2u32, 0.31)] {
        let plan = ScanPlan::linear(
            true_c - half,
            true_c + half,
            16,
            1,
            order,
            0.0,
            ScanMode::Fluorescence,
        )
        .unwrap();
        let spec = ModelSpec::fluorescence(order);
        let mut hits = 0usize;
        let mut beta_cis = Vec::new();
        let seeds = 10u64;
        for seed in 0..seeds {
            let records = simulate_scan(&plan, &setup, 1000 + seed).unwrap();
            let fit = fit_fluorescence_scan(&records, &spec, None).unwrap();
            if (fit.compensation_voltage() - true_c).abs() <= fit.compensation_ci95() {
                hits += 1;
            }
            beta_cis.push(fit.compensation_ci95() * fit.params.beta_slope.abs());
        }
        beta_cis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = beta_cis[beta_cis.len() / 2];
        let scale_ok = median >= reference / 3.0 && median <= reference * 3.0;
        let recover_ok = hits >= 7;
        println!(
            "[acceptance]   n={order}: null recovered within ci95 in {hits}/{seeds} runs, \
             median β-unit ci95 = {median:.3} (reference {reference})"
        );
        pass &= scale_ok && recover_ok;
    }
    report(8, "fluorescence-mode fits", pass);
}
