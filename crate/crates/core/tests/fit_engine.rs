//! Scan-fit contracts: identifiability, covariance conventions, and
//! round trips through the simulator.

mod common;

use common::assert_close;
use micromotion_core::fit::{
    fit_bessel_scan, fit_fluorescence_scan, fit_sinusoid, initial_guess, levenberg_marquardt,
    numeric_jacobian, visibility_zero_crossing, LmOptions, ModelKind, ModelSpec, ParamName,
    ParamVector, VisibilityPoint,
};
use micromotion_core::physics::{beta_per_field, scan_model, ModulationDepth, ScanCurve};
use micromotion_core::presets;
use micromotion_core::sim::{
    simulate_correlation_histogram, simulate_scan, CorrelationConfig, Detection, ScanMode,
    ScanPlan, ScanRecord, ScanSetup, StrayFieldModel,
};

const PULSE: f64 = 1e-5;

fn surface_spec() -> ModelSpec {
    ModelSpec::raman(0, PULSE, presets::surface_trap().thermal.lamb_dicke)
}

/// Noise-free Raman records generated straight from the model.
fn noiseless_records(curve: &ScanCurve, spec: &ModelSpec, voltages: &[f64]) -> Vec<ScanRecord> {
    let shots = 100_000_000u64;
    voltages
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = scan_model(curve, v, spec.order, spec.pulse_time, spec.lamb_dicke).unwrap();
            ScanRecord {
                timestamp: i as f64,
                voltage: v,
                shots,
                detection: Detection::Raman {
                    successes: (p * shots as f64).round() as u64,
                },
            }
        })
        .collect()
}

fn reference_curve() -> ScanCurve {
    ScanCurve {
        strength: std::f64::consts::PI / PULSE * 1.04,
        beta_offset: 0.0,
        beta_slope: 51.4,
        beta_curvature: 0.0,
        center_voltage: 0.5,
        mean_phonons: 6.0,
    }
}

fn grid(center: f64, half: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * half / (points - 1) as f64;
    (0..points).map(|i| center - half + step * i as f64).collect()
}

#[test]
fn noiseless_scan_recovers_center_to_microvolt() {
    let spec = surface_spec();
    let curve = reference_curve();
    let records = noiseless_records(&curve, &spec, &grid(0.5, 0.04, 20));
    let fit = fit_bessel_scan(&records, &spec, None).unwrap();
    assert!(fit.converged);
    assert!(
        (fit.compensation_voltage() - 0.5).abs() <= 1e-6,
        "c = {}",
        fit.compensation_voltage()
    );
    assert_close(fit.params.beta_slope, 51.4, 0.01, "beta slope");
    assert_close(fit.params.mean_phonons, 6.0, 0.05, "mean phonons");
}

#[test]
fn translation_covariance_of_the_center() {
    let app = presets::surface_trap();
    let spec = surface_spec();
    let stray = StrayFieldModel::constant(-app.trap.field_gain * 0.5);
    let setup = ScanSetup::from_apparatus(&app, stray);
    let plan = ScanPlan::linear(0.46, 0.54, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
    let records = simulate_scan(&plan, &setup, 8).unwrap();
    let fit = fit_bessel_scan(&records, &spec, None).unwrap();

    let shift = 0.5;
    let shifted: Vec<ScanRecord> = records
        .iter()
        .map(|r| ScanRecord {
            voltage: r.voltage + shift,
            ..*r
        })
        .collect();
    let fit_shifted = fit_bessel_scan(&shifted, &spec, None).unwrap();
    assert!(
        (fit_shifted.compensation_voltage() - fit.compensation_voltage() - shift).abs() <= 1e-9,
        "shifted c {} vs base c {}",
        fit_shifted.compensation_voltage(),
        fit.compensation_voltage()
    );
}

#[test]
fn weight_rescaling_leaves_parameters_unchanged() {
    // Scaling every weight by a constant multiplies the cost but moves
    // neither the argmin nor (with the reduced-chi-square convention)
    // the covariance.
    let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.4 * x - 0.7 + (x * 5.0).sin() * 0.05).collect();
    let make = |scale: f64| {
        let xs = xs.clone();
        let ys = ys.clone();
        move |p: &[f64]| -> micromotion_core::Result<Vec<f64>> {
            Ok(xs
                .iter()
                .zip(ys.iter())
                .map(|(x, y)| (p[0] * x + p[1] - y) * scale.sqrt())
                .collect())
        }
    };
    let base = levenberg_marquardt(make(1.0), &[1.0, 0.0], &LmOptions::default()).unwrap();
    let scaled = levenberg_marquardt(make(7.3), &[1.0, 0.0], &LmOptions::default()).unwrap();
    for i in 0..2 {
        assert_close(scaled.params[i], base.params[i], 1e-9, "parameter");
        assert_close(
            scaled.covariance[i][i],
            base.covariance[i][i],
            1e-9 * base.covariance[i][i].abs(),
            "covariance diagonal",
        );
    }
}

#[test]
fn numeric_jacobian_is_step_size_stable() {
    // Re-deriving the Jacobian with a halved difference step changes the
    // significant entries by less than 1e-4 relative.
    let spec = surface_spec();
    let curve = reference_curve();
    let records = noiseless_records(&curve, &spec, &grid(0.5, 0.04, 20));
    let voltages: Vec<f64> = records.iter().map(|r| r.voltage).collect();
    let values: Vec<f64> = records
        .iter()
        .map(|r| r.success_fraction().unwrap())
        .collect();
    let residual = move |p: &[f64]| -> micromotion_core::Result<Vec<f64>> {
        let curve = ScanCurve {
            strength: p[0],
            beta_offset: 0.0,
            beta_slope: p[1],
            beta_curvature: 0.0,
            center_voltage: p[2],
            mean_phonons: p[3],
        };
        voltages
            .iter()
            .zip(values.iter())
            .map(|(&v, &y)| scan_model(&curve, v, 0, PULSE, spec.lamb_dicke).map(|m| m - y))
            .collect()
    };
    let point = [curve.strength * 1.01, 50.0, 0.501, 5.5];
    let scales = [curve.strength, 50.0, 0.01, 5.0];
    let coarse = numeric_jacobian(&residual, &point, &scales, 1.0).unwrap();
    let fine = numeric_jacobian(&residual, &point, &scales, 0.5).unwrap();
    for j in 0..coarse.len() {
        let norm = coarse[j]
            .iter()
            .map(|v| v.abs())
            .fold(0.0_f64, f64::max)
            .max(1e-12);
        for i in 0..coarse[j].len() {
            let diff = (coarse[j][i] - fine[j][i]).abs();
            assert!(
                diff <= 1e-4 * norm,
                "column {j} row {i}: {} vs {} (norm {norm})",
                coarse[j][i],
                fine[j][i]
            );
        }
    }
}

#[test]
fn both_slope_orientations_reach_the_same_minimum() {
    let app = presets::surface_trap();
    let spec = surface_spec();
    let stray = StrayFieldModel::constant(-app.trap.field_gain * 0.5);
    let setup = ScanSetup::from_apparatus(&app, stray);
    let plan = ScanPlan::linear(0.46, 0.54, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
    let records = simulate_scan(&plan, &setup, 13).unwrap();

    let mut init = initial_guess(&records, &spec).unwrap();
    let positive = fit_bessel_scan(&records, &spec, Some(&init)).unwrap();
    init.beta_slope = -init.beta_slope;
    let negative = fit_bessel_scan(&records, &spec, Some(&init)).unwrap();

    assert!(positive.params.beta_slope > 0.0);
    assert!(negative.params.beta_slope > 0.0, "canonicalized to b1 > 0");
    assert_close(
        negative.residual_norm,
        positive.residual_norm,
        1e-6 * positive.residual_norm,
        "residual norm across orientations",
    );
}

#[test]
fn carrier_scan_matches_reference_sensitivity() {
    // 20 points, 100 shots, surface preset: the confidence half-width is
    // on the 0.0018 V scale of the reference apparatus.
    let app = presets::surface_trap();
    let spec = surface_spec();
    let stray = StrayFieldModel::constant(-app.trap.field_gain * 0.5);
    let setup = ScanSetup::from_apparatus(&app, stray);
    let plan = ScanPlan::linear(0.46, 0.54, 20, 100, 0, PULSE, ScanMode::Raman).unwrap();
    let records = simulate_scan(&plan, &setup, 5).unwrap();
    let fit = fit_bessel_scan(&records, &spec, None).unwrap();
    assert!(fit.converged);
    let c = fit.compensation_voltage();
    let ci = fit.compensation_ci95();
    assert!((c - 0.5).abs() <= ci, "c = {c} ± {ci}");
    assert!(
        ci >= 0.0018 / 3.0 && ci <= 0.0018 * 3.0,
        "ci95 {ci} should sit near the 0.0018 V reference scale"
    );
}

#[test]
fn initial_guess_behaviors() {
    let spec = surface_spec();
    let curve = reference_curve();
    // Clean symmetric carrier data: c0 lands on the grid point nearest
    // the true center.
    let voltages = grid(0.5, 0.04, 21); // odd count puts a grid point at 0.5
    let records = noiseless_records(&curve, &spec, &voltages);
    let guess = initial_guess(&records, &spec).unwrap();
    assert_eq!(guess.center_voltage, voltages[10]);
    assert!(guess.beta_slope > 20.0 && guess.beta_slope < 110.0);
    // Thermal contrast deficit maps to a positive phonon-number guess.
    assert!(
        guess.mean_phonons > 1.0 && guess.mean_phonons < 30.0,
        "n_ph guess {}",
        guess.mean_phonons
    );

    // Sideband data dips at the null.
    let sideband = ModelSpec::raman(1, PULSE, spec.lamb_dicke);
    let records = noiseless_records(
        &ScanCurve {
            beta_slope: 51.4,
            ..curve
        },
        &sideband,
        &voltages,
    );
    let guess = initial_guess(&records, &sideband).unwrap();
    assert_eq!(guess.center_voltage, voltages[10]);

    // Flat data is rejected.
    let flat: Vec<ScanRecord> = voltages
        .iter()
        .enumerate()
        .map(|(i, &v)| ScanRecord {
            timestamp: i as f64,
            voltage: v,
            shots: 100,
            detection: Detection::Raman { successes: 50 },
        })
        .collect();
    assert!(matches!(
        initial_guess(&flat, &spec),
        Err(micromotion_core::Error::Initialization(_))
    ));

    // A scan that never brackets the extremum is rejected.
    let off_null = noiseless_records(&curve, &spec, &grid(0.53, 0.012, 10));
    assert!(matches!(
        fit_bessel_scan(&off_null, &spec, None),
        Err(micromotion_core::Error::Initialization(_))
    ));
}

#[test]
fn fluorescence_zero_noise_round_trip() {
    let spec = ModelSpec::fluorescence(2);
    let amplitude = 20.0_f64; // sqrt-count units; peak J2max² ≈ 0.236·A²
    let background = 12.0;
    let slope = 51.4;
    let center = 1.39;
    let voltages = grid(center, 4.2 / slope, 21);
    let records: Vec<ScanRecord> = voltages
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let beta = slope * (v - center);
            let j = micromotion_core::special::bessel_j(2, beta).unwrap();
            let mean = (amplitude * j).powi(2) + background;
            ScanRecord {
                timestamp: i as f64,
                voltage: v,
                shots: 1,
                detection: Detection::Fluorescence {
                    counts: mean.round() as u64,
                },
            }
        })
        .collect();
    let fit = fit_fluorescence_scan(&records, &spec, None).unwrap();
    assert!(fit.converged);
    assert_close(fit.compensation_voltage(), center, 2e-4, "center");
    assert_close(fit.params.beta_slope, slope, 0.5, "slope");
    assert_close(fit.params.background, background, 1.0, "background");
    assert_close(fit.params.strength.abs(), amplitude, 0.5, "amplitude");
}

#[test]
fn fluorescence_sideband_dip_sits_between_twin_maxima() {
    // The n = 2 profile has maxima at β ≈ ±3.05 and the compensation
    // voltage at the central dip.
    let app = presets::surface_trap();
    let mut setup = ScanSetup::from_apparatus(
        &app,
        StrayFieldModel::constant(-app.trap.field_gain * 1.39),
    );
    setup.fluorescence = Some(micromotion_core::physics::FluorescenceConfig {
        collection_efficiency: 0.007,
        cycling_rate: 5e4,
        detection_time: 0.02,
    });
    let slope = app.trap.field_gain * beta_per_field(&app.trap, &app.ion, &app.laser);
    let plan = ScanPlan::linear(
        1.39 - 4.2 / slope,
        1.39 + 4.2 / slope,
        16,
        1,
        2,
        0.0,
        ScanMode::Fluorescence,
    )
    .unwrap();
    let records = simulate_scan(&plan, &setup, 1001).unwrap();
    let fit = fit_fluorescence_scan(&records, &ModelSpec::fluorescence(2), None).unwrap();
    let c = fit.compensation_voltage();
    let ci = fit.compensation_ci95();
    assert!((c - 1.39).abs() <= ci.max(0.02), "c = {c} ± {ci}");
}

#[test]
fn sinusoid_fit_poisson_round_trip() {
    let config = CorrelationConfig {
        phase_bins: 32,
        mean_rate: 5e4,
        duration: 1.0,
        doppler_gain: 1.5,
    };
    let hist = simulate_correlation_histogram(&config, ModulationDepth(0.2), 3).unwrap();
    let fit = fit_sinusoid(&hist).unwrap();
    assert!(
        (fit.visibility - 0.3).abs() <= 3.0 * fit.visibility_err,
        "V = {} ± {}",
        fit.visibility,
        fit.visibility_err
    );
}

#[test]
fn zero_crossing_from_simulated_series() {
    // Signed visibility flips across the null; the weighted line fit
    // finds the crossing.
    let app = presets::surface_trap();
    let bpf = beta_per_field(&app.trap, &app.ion, &app.laser);
    let electrode_gain = 150.0;
    let true_null = 0.2;
    let mut points = Vec::new();
    for (i, v) in (-3..=3).map(|i| true_null + i as f64 * 0.15).enumerate() {
        let beta = bpf * electrode_gain * (v - true_null);
        let config = CorrelationConfig {
            phase_bins: 32,
            mean_rate: 2e4,
            duration: 1.0,
            doppler_gain: 0.2,
        };
        let hist =
            simulate_correlation_histogram(&config, ModulationDepth(beta), 40 + i as u64).unwrap();
        let fit = fit_sinusoid(&hist).unwrap();
        points.push(VisibilityPoint {
            voltage: v,
            signed_visibility: fit.signed_visibility(),
            std_error: fit.visibility_err,
        });
    }
    let crossing = visibility_zero_crossing(&points).unwrap();
    assert!(!crossing.extrapolated);
    assert!(
        (crossing.voltage - true_null).abs() <= 2.0 * crossing.ci95,
        "root {} ± {}",
        crossing.voltage,
        crossing.ci95
    );
}

#[test]
fn float_pulse_time_pins_strength() {
    let spec = ModelSpec {
        float_pulse_time: true,
        ..surface_spec()
    };
    let curve = reference_curve();
    let records = noiseless_records(&curve, &spec, &grid(0.5, 0.04, 20));
    let fit = fit_bessel_scan(&records, &spec, None).unwrap();
    assert!(fit.floated.contains(&ParamName::PulseTime));
    assert!(!fit.floated.contains(&ParamName::Strength));
    // Only the product strength·pulse_time is observable; check it.
    let product = fit.params.strength * fit.params.pulse_time;
    assert_close(
        product,
        curve.strength * PULSE,
        1e-4 * product.abs(),
        "rotation angle product",
    );
}

#[test]
fn hints_override_automatic_initialization() {
    let spec = surface_spec();
    let curve = reference_curve();
    let records = noiseless_records(&curve, &spec, &grid(0.5, 0.04, 20));
    let hints = ParamVector {
        strength: curve.strength,
        beta_offset: 0.0,
        beta_slope: curve.beta_slope,
        beta_curvature: 0.0,
        center_voltage: 0.5,
        mean_phonons: curve.mean_phonons,
        pulse_time: PULSE,
        background: 0.0,
    };
    let fit = fit_bessel_scan(&records, &spec, Some(&hints)).unwrap();
    assert!(fit.converged);
    assert!(fit.iterations <= 3, "warm start took {}", fit.iterations);
    assert!((fit.compensation_voltage() - 0.5).abs() < 1e-7);
}

#[test]
fn mode_mismatch_is_a_data_error() {
    let spec = surface_spec();
    let records = vec![
        ScanRecord {
            timestamp: 0.0,
            voltage: 0.0,
            shots: 1,
            detection: Detection::Fluorescence { counts: 5 },
        };
        10
    ];
    assert!(matches!(
        fit_bessel_scan(&records, &spec, None),
        Err(micromotion_core::Error::Data(_))
    ));
    assert!(matches!(
        fit_fluorescence_scan(&records, &ModelSpec::raman(0, PULSE, 0.1), None),
        Err(micromotion_core::Error::Config(_))
    ));
    let bad_kind = ModelSpec {
        kind: ModelKind::Sinusoid,
        ..spec
    };
    assert!(fit_bessel_scan(&records, &bad_kind, None).is_err());
}

#[test]
fn beta_offset_floats_only_on_request() {
    // With curvature in the map, b0 and c decouple; a wide noiseless scan
    // recovers the injected intrinsic offset when asked to float it.
    let spec = ModelSpec {
        float_beta_offset: true,
        ..surface_spec()
    };
    let curve = ScanCurve {
        beta_offset: 0.25,
        beta_curvature: 30.0,
        ..reference_curve()
    };
    let records = noiseless_records(&curve, &spec, &grid(0.5, 0.06, 31));
    // The offset direction is only weakly identified (through the cubic
    // term of β²), so start near the truth as a warm-started refit would.
    let hints = ParamVector {
        strength: curve.strength,
        beta_offset: 0.2,
        beta_slope: curve.beta_slope,
        beta_curvature: curve.beta_curvature,
        center_voltage: 0.502,
        mean_phonons: curve.mean_phonons,
        pulse_time: PULSE,
        background: 0.0,
    };
    let fit = fit_bessel_scan(&records, &spec, Some(&hints)).unwrap();
    assert!(fit.floated.contains(&ParamName::BetaOffset));
    assert!(
        (fit.params.beta_offset - 0.25).abs() < 0.05,
        "b0 = {}",
        fit.params.beta_offset
    );
    assert!(
        (fit.compensation_voltage() - 0.5).abs() < 2e-3,
        "c = {}",
        fit.compensation_voltage()
    );

    // Default: pinned at zero.
    let default_fit = fit_bessel_scan(&records, &surface_spec(), None).unwrap();
    assert!(!default_fit.floated.contains(&ParamName::BetaOffset));
    assert_eq!(default_fit.params.beta_offset, 0.0);
}
